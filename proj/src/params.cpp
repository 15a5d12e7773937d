#include "kpseg/params.hpp"

#include "kpseg/errors.hpp"

namespace kpseg {

Parameter* ParameterStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                  std::vector<int64_t> dims) {
  if (find(name)) throw ArgumentError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->dims = dims.empty() ? std::vector<int64_t>{rows, cols} : std::move(dims);
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->momentum = Mat::Zero(rows, cols);
  params_.push_back(std::move(p));
  return params_.back().get();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

int64_t ParameterStore::total_size() const {
  int64_t n = 0;
  for (auto& p : params_) n += p->size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad.setZero();
}

void ParameterStore::momentum_step(double lr, double momentum) {
  for (auto& p : params_)
    if (!p->grad.allFinite())
      throw DataError("non-finite gradient in parameter '" + p->name + "'");
  for (auto& p : params_) {
    p->momentum = momentum * p->momentum + p->grad;
    p->value -= lr * p->momentum;
    p->grad.setZero();
  }
}

}  // namespace kpseg
