#pragma once

#include <string>
#include <vector>

#include "natpn/autodiff.hpp"
#include "natpn/tensor.hpp"

namespace natpn {

/// Named parameter tensors plus Adam moment buffers. Modules hold
/// indices into one shared store so a whole model can be stepped,
/// serialized, or selectively frozen by name prefix.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m, v;  // Adam first/second moments
  };

  std::vector<Entry> entries;

  int add(std::string name, Tensor init) {
    Entry e;
    e.name = std::move(name);
    e.m = Tensor::zeros(init.shape());
    e.v = Tensor::zeros(init.shape());
    e.value = std::move(init);
    entries.push_back(std::move(e));
    return static_cast<int>(entries.size() - 1);
  }

  Entry& operator[](int i) { return entries[static_cast<size_t>(i)]; }
  const Entry& operator[](int i) const { return entries[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(entries.size()); }
};

/// Per-forward leaf nodes for every store entry, aligned by index.
struct BoundParams {
  std::vector<ad::Node> nodes;
  ad::Node operator[](int i) const { return nodes[static_cast<size_t>(i)]; }
};

inline BoundParams bind_params(ParamStore& store, ad::Tape& tape) {
  BoundParams b;
  b.nodes.reserve(store.entries.size());
  for (auto& e : store.entries) b.nodes.push_back(tape.leaf(e.value));
  return b;
}

}  // namespace natpn
