#include "hct/params.hpp"

namespace hct {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (items_.count(name)) throw Error("duplicate parameter name: " + name);
  t.requires_grad = true;
  auto [it, ok] = items_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw Error("unknown parameter name: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw Error("unknown parameter name: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(name);
  return out;
}

std::int64_t ParamStore::total_scalars() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

}  // namespace hct
