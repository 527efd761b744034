#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refine/errors.hpp"
#include "refine/tensor.hpp"

namespace refine {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over groups of parameters that each have their
/// own learning rate.
///
/// A parameter that did not receive any gradient in the last backward pass
/// (Tensor::reached() is false) is skipped entirely: its value, moments and
/// step count stay as they were. This keeps per-object latents that were not
/// in the batch bit-identical.
template <typename Scalar>
class Adam {
 public:
  using Matrix = MatrixX<Scalar>;

  struct Slot {
    Tensor<Scalar> param;
    Matrix first_moment;
    Matrix second_moment;
    std::int64_t steps = 0;
  };

  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Adds a group and returns its index.
  std::size_t add_group(std::vector<Tensor<Scalar>> params, double lr) {
    Group group{lr, {}};
    for (auto& p : params) {
      if (!p.requires_grad()) throw DomainError("Adam: parameter does not require grad");
      group.slots.push_back({p, Matrix::Zero(p.rows(), p.cols()), Matrix::Zero(p.rows(), p.cols()), 0});
    }
    groups_.push_back(std::move(group));
    return groups_.size() - 1;
  }

  void set_lr(std::size_t group, double lr) { groups_.at(group).lr = lr; }
  double lr(std::size_t group) const { return groups_.at(group).lr; }
  const std::vector<Slot>& slots(std::size_t group) const { return groups_.at(group).slots; }

  void zero_grad() {
    for (auto& g : groups_) {
      for (auto& s : g.slots) s.param.zero_grad();
    }
  }

  /// Applies one update. Throws NumericalError, leaving every parameter and
  /// moment untouched, if any reached gradient is non-finite.
  void step() {
    for (const auto& g : groups_) {
      for (const auto& s : g.slots) {
        if (s.param.reached() && !s.param.grad().allFinite()) {
          throw NumericalError("Adam: non-finite gradient, step rejected");
        }
      }
    }
    const Scalar b1 = static_cast<Scalar>(options_.beta1);
    const Scalar b2 = static_cast<Scalar>(options_.beta2);
    const Scalar eps = static_cast<Scalar>(options_.epsilon);
    for (auto& g : groups_) {
      for (auto& s : g.slots) {
        if (!s.param.reached()) continue;
        ++s.steps;
        const auto& grad = s.param.grad();
        s.first_moment = b1 * s.first_moment + (Scalar(1) - b1) * grad;
        s.second_moment = b2 * s.second_moment + (Scalar(1) - b2) * grad.cwiseAbs2();
        const double t = static_cast<double>(s.steps);
        const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(options_.beta1, t));
        const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(options_.beta2, t));
        const Scalar lr = static_cast<Scalar>(g.lr);
        s.param.mutable_value().array() -=
            lr * (s.first_moment.array() / c1) / ((s.second_moment.array() / c2).sqrt() + eps);
      }
    }
  }

 private:
  struct Group {
    double lr;
    std::vector<Slot> slots;
  };

  AdamOptions options_;
  std::vector<Group> groups_;
};

}  // namespace refine
