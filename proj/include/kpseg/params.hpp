#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kpseg/matrix.hpp"

namespace kpseg {

// One learnable tensor with its gradient and momentum buffers. Tensors are
// stored 2-D: a C-vector as 1 x C, a K x C_in x C_out stack as
// (K * C_in) x C_out. `dims` keeps the logical shape for serialization.
struct Parameter {
  std::string name;
  std::vector<int64_t> dims;
  Mat value;
  Mat grad;
  Mat momentum;

  int64_t size() const { return value.size(); }
};

class ParameterStore {
 public:
  // Creates a zero-initialized parameter. `rows`/`cols` give the physical
  // 2-D shape; `dims` the logical one (defaults to {rows, cols}).
  Parameter* create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                    std::vector<int64_t> dims = {});

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  size_t count() const { return params_.size(); }
  int64_t total_size() const;

  void zero_grads();

  // v <- momentum * v + grad; value <- value - lr * v; grads zeroed.
  // Throws naming the parameter on a non-finite gradient.
  void momentum_step(double lr, double momentum);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Spec-facing alias for the optimizer update.
inline void momentum_step(ParameterStore& params, double lr, double momentum) {
  params.momentum_step(lr, momentum);
}

}  // namespace kpseg
