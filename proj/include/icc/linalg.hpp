#pragma once

#include <cstddef>
#include <vector>

namespace icc {

// Dense row-major square matrix; only what the mode solver needs.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  static Matrix identity(std::size_t n);

  double frobenius_norm() const;
  // max |a_ij - a_ji| / max(1, max |a_ij|)
  double asymmetry() const;
  double trace() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the unit eigenvector of values[k]
  int sweeps = 0;
};

// Cyclic Jacobi rotations. Stops when the off-diagonal Frobenius norm drops
// below `relative_tolerance` times the matrix norm. Input must be symmetric.
SymmetricEigen jacobi_eigen(const Matrix& a, double relative_tolerance = 1e-13, int max_sweeps = 100);

// Solves a x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(Matrix a, std::vector<double> b);

}  // namespace icc
