#pragma once

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <vector>

#include "clbench/rng.hpp"
#include "oracles/oracles.hpp"

// Shared scaffolding for the unit and acceptance suites: seeded case
// generation that avoids near-zero vectors, conversions between oracle
// matrices and tensors, and a central finite-difference gradient.
namespace testutil {

inline oracles::Vec rand_vec(clbench::Rng& rng, int dim) {
  oracles::Vec v(dim);
  while (true) {
    double ss = 0;
    for (int d = 0; d < dim; ++d) {
      v[d] = clbench::rand_normal(rng);
      ss += v[d] * v[d];
    }
    if (std::sqrt(ss) > 0.3) return v;  // keep cosine well-conditioned
  }
}

inline oracles::Mat rand_mat(clbench::Rng& rng, int rows, int dim) {
  oracles::Mat m;
  m.reserve(rows);
  for (int r = 0; r < rows; ++r) m.push_back(rand_vec(rng, dim));
  return m;
}

inline torch::Tensor to_tensor(const oracles::Vec& v, torch::Dtype dtype = torch::kFloat64) {
  auto t = torch::empty({static_cast<int64_t>(v.size())}, torch::kFloat64);
  auto acc = t.accessor<double, 1>();
  for (size_t i = 0; i < v.size(); ++i) acc[i] = v[i];
  return t.to(dtype);
}

inline torch::Tensor to_tensor(const oracles::Mat& m, torch::Dtype dtype = torch::kFloat64) {
  auto t = torch::empty({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())},
                        torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (size_t r = 0; r < m.size(); ++r)
    for (size_t c = 0; c < m[r].size(); ++c) acc[r][c] = m[r][c];
  return t.to(dtype);
}

inline oracles::Mat to_mat(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous();
  auto acc = d.accessor<double, 2>();
  oracles::Mat m(d.size(0), oracles::Vec(d.size(1)));
  for (int64_t r = 0; r < d.size(0); ++r)
    for (int64_t c = 0; c < d.size(1); ++c) m[r][c] = acc[r][c];
  return m;
}

inline std::vector<int64_t> to_i64(const std::vector<int>& v) {
  return {v.begin(), v.end()};
}

inline torch::Tensor label_tensor(const std::vector<int>& labels) {
  auto t = torch::empty({static_cast<int64_t>(labels.size())}, torch::kInt64);
  auto acc = t.accessor<int64_t, 1>();
  for (size_t i = 0; i < labels.size(); ++i) acc[i] = labels[i];
  return t;
}

// Central finite differences of a scalar function of one double tensor,
// evaluated elementwise.
inline torch::Tensor fd_grad(const std::function<double(const torch::Tensor&)>& f,
                             const torch::Tensor& at, double h = 1e-5) {
  auto base = at.detach().to(torch::kFloat64).contiguous().clone();
  auto grad = torch::zeros_like(base);
  auto flat = base.view(-1);
  auto gflat = grad.view(-1);
  for (int64_t i = 0; i < flat.numel(); ++i) {
    double keep = flat[i].item<double>();
    flat[i] = keep + h;
    double up = f(base);
    flat[i] = keep - h;
    double down = f(base);
    flat[i] = keep;
    gflat[i] = (up - down) / (2 * h);
  }
  return grad;
}

// Max over elements of |a-b| / max(1, |b|).
inline double max_rel_diff(const torch::Tensor& a, const torch::Tensor& b) {
  auto da = a.to(torch::kFloat64).flatten();
  auto db = b.to(torch::kFloat64).flatten();
  double worst = 0;
  for (int64_t i = 0; i < da.numel(); ++i) {
    double x = da[i].item<double>(), y = db[i].item<double>();
    double rel = std::abs(x - y) / std::max(1.0, std::abs(y));
    if (rel > worst) worst = rel;
  }
  return worst;
}

}  // namespace testutil
