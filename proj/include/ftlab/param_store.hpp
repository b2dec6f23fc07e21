#pragma once

#include <map>
#include <string>
#include <vector>

#include "ftlab/tensor.hpp"

namespace ftlab {

// Named parameter collection. Iteration order is lexicographic (std::map),
// which keeps every loop over parameters deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor t, bool trainable = true) {
    check(!entries_.count(name), "duplicate parameter '" + name + "'");
    entries_[name] = Entry{std::move(t), trainable};
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second.tensor;
  }
  const Tensor& get(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second.tensor;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second.trainable;
  }
  void set_trainable(const std::string& name, bool flag) {
    auto it = entries_.find(name);
    check(it != entries_.end(), "unknown parameter '" + name + "'");
    it->second.trainable = flag;
  }
  // Marks exactly the given names trainable, everything else frozen.
  void set_trainable_only(const std::vector<std::string>& names);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool same_shapes(const ParamStore& other) const;

  // Binary checkpoint: version tag, then (name, shape, little-endian f64)
  // records in lexicographic order. Round trips bit-exactly.
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace ftlab
