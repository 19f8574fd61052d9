#pragma once

#include <random>

#include <qdot/model.hpp>

#include "oracles.hpp"

namespace testutil {

inline double max_abs(const qdot::Mat3& a, const qdot::Mat3& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double rel_err(const qdot::Mat3& a, const qdot::Mat3& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline qdot::ModelParams params(double omega, double gd, double gu) {
  qdot::ModelParams p;
  p.omega = omega;
  p.gamma_down = gd;
  p.gamma_up = gu;
  return p;
}

inline oracle::Rates rates(const qdot::ModelParams& p) {
  return {p.omega, p.gamma_down, p.gamma_up};
}

}  // namespace testutil
