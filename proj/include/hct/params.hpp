#pragma once

// Named parameter collection. std::map keeps iteration in name order, which
// fixes the checkpoint layout and the optimizer traversal order.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hct/tensor.hpp"

namespace hct {

class ParamStore {
 public:
  // Registers a parameter (requires_grad is forced on). Throws on duplicates.
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return items_.count(name) != 0; }

  std::vector<std::string> names() const;
  std::int64_t total_scalars() const;
  std::size_t count() const { return items_.size(); }

  std::map<std::string, Tensor>& items() { return items_; }
  const std::map<std::string, Tensor>& items() const { return items_; }

 private:
  std::map<std::string, Tensor> items_;
};

}  // namespace hct
