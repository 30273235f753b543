#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "matrix_trader/nets/autograd.hpp"

namespace mtrader::nets {

template <class T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;
  bool learnable = true;
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

// Named arrays in a fixed order. Non-learnable entries (batch-norm running
// statistics, input normalization) are stored alongside but never updated by
// an optimizer.
template <class T>
class Parameters {
 public:
  void add(std::string name, Tensor<T> value, bool learnable) {
    if (index_.contains(name)) throw Error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(value), learnable});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor<T>& at(const std::string& name) const { return entries_[position(name)].value; }
  Tensor<T>& at(const std::string& name) { return entries_[position(name)].value; }
  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("no parameter named '" + name + "'");
    return it->second;
  }

  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  std::vector<ParamEntry<T>>& entries() { return entries_; }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e.learnable) n += e.value.size();
    }
    return n;
  }

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.learnable);
    return out;
  }

  friend bool operator==(const Parameters& a, const Parameters& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Graph leaves for one forward/backward pass over a Parameters instance.
// Learnable entries become gradient-tracking leaves when `track_grad` is set.
// Running statistics alias the source when it is mutable, otherwise a private
// copy is used (and never written back).
template <class T>
class BoundParameters {
 public:
  BoundParameters(Parameters<T>& source, bool track_grad) : mutable_source_(&source) { bind(source, track_grad); }
  explicit BoundParameters(const Parameters<T>& source) { bind(source, false); }

  const Var<T>& operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error("no parameter named '" + name + "'");
    return it->second;
  }

  std::span<T> running(const std::string& name) {
    if (mutable_source_) return mutable_source_->at(name).data;
    auto it = running_copy_.find(name);
    if (it == running_copy_.end()) throw Error("no running statistic named '" + name + "'");
    return it->second;
  }

  bool can_update_running() const { return mutable_source_ != nullptr; }

  // Learnable leaves in parameter order.
  const std::vector<Var<T>>& learnable() const { return learnable_; }
  const std::vector<std::string>& learnable_names() const { return learnable_names_; }

 private:
  void bind(const Parameters<T>& source, bool track_grad) {
    for (const auto& e : source.entries()) {
      if (e.learnable) {
        Var<T> v = track_grad ? Var<T>::parameter(e.value) : Var<T>::constant(e.value);
        vars_.emplace(e.name, v);
        learnable_.push_back(v);
        learnable_names_.push_back(e.name);
      } else {
        vars_.emplace(e.name, Var<T>::constant(e.value));
        if (!mutable_source_) running_copy_.emplace(e.name, e.value.data);
      }
    }
  }

  Parameters<T>* mutable_source_ = nullptr;
  std::map<std::string, Var<T>> vars_;
  std::map<std::string, std::vector<T>> running_copy_;
  std::vector<Var<T>> learnable_;
  std::vector<std::string> learnable_names_;
};

}  // namespace mtrader::nets
