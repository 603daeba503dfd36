#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <string>

namespace hjfield {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Eigen::Index;

// Momenta are stored as n x r matrices: row = base index mu, column = field
// index i.  The characteristic ansatz factorizes them as p^mu_i = u_i X^mu.
inline Matrix momentum_from_covelocity(const Vector& X, const Vector& u) {
  return X * u.transpose();
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Floating-point formatting used for every CSV/JSON artifact: 17 significant
// digits so parsing the files back reproduces the doubles bit-exactly.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace hjfield
