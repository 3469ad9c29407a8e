// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Streaming moments for the shared background class and the closed-form
// two-class LDA used by semantic slots.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dualmem/corpus_io.hpp"
#include "dualmem/error.hpp"

namespace dualmem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec to_vec(std::span<const float> f) {
  Vec v(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) v[Eigen::Index(i)] = f[i];
  return v;
}

/// Running count, mean and centered second-moment sum (Welford / Chan).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int d = 0) : mean_(Vec::Zero(d)), m2_(Mat::Zero(d, d)) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  std::uint64_t count() const { return count_; }
  const Vec& mean() const { return mean_; }
  const Mat& m2() const { return m2_; }

  void add(const Vec& x) {
    if (x.size() != mean_.size())
      throw Error(ErrorKind::DimensionMismatch, "accumulate: got dimension " + std::to_string(x.size()) +
                                                    ", expected " + std::to_string(mean_.size()));
    if (!x.allFinite()) throw Error(ErrorKind::NonFinite, "accumulate: non-finite sample");
    ++count_;
    const double n = double(count_);
    const Vec delta = x - mean_;
    mean_ += delta / n;
    // delta * (x - new_mean)^T == delta * delta^T * (n-1)/n; filled symmetrically.
    const double scale = (n - 1.0) / n;
    const Eigen::Index d = mean_.size();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sj = scale * delta[j];
      for (Eigen::Index i = j; i < d; ++i) m2_(i, j) += delta[i] * sj;
    }
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = j + 1; i < d; ++i) m2_(j, i) = m2_(i, j);
  }

  void add(std::span<const float> x) { add(to_vec(x)); }

  /// Population covariance m2 / count.
  Mat covariance() const {
    if (count_ == 0) return Mat::Zero(dim(), dim());
    return m2_ / double(count_);
  }

  friend MomentAccumulator merge(const MomentAccumulator& a, const MomentAccumulator& b);

 private:
  std::uint64_t count_ = 0;
  Vec mean_;
  Mat m2_;
};

/// Pairwise combination; equals accumulating all samples of `a` then `b`.
inline MomentAccumulator merge(const MomentAccumulator& a, const MomentAccumulator& b) {
  if (a.dim() != b.dim())
    throw Error(ErrorKind::DimensionMismatch, "merge: dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  if (b.count_ == 0) return a;
  if (a.count_ == 0) return b;
  MomentAccumulator out(a.dim());
  out.count_ = a.count_ + b.count_;
  const double na = double(a.count_), nb = double(b.count_), n = double(out.count_);
  const Vec delta = b.mean_ - a.mean_;
  out.mean_ = a.mean_ + delta * (nb / n);
  const double scale = na * nb / n;
  const Eigen::Index d = delta.size();
  out.m2_ = a.m2_ + b.m2_;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sj = scale * delta[j];
    for (Eigen::Index i = j; i < d; ++i) out.m2_(i, j) += delta[i] * sj;
  }
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j + 1; i < d; ++i) out.m2_(j, i) = out.m2_(i, j);
  return out;
}

inline MomentAccumulator accumulate(MomentAccumulator acc, const Vec& x) {
  acc.add(x);
  return acc;
}

/// Accumulates `items` in `threads` contiguous chunks and merges the partial
/// results in chunk order, so the output depends only on the thread count.
template <typename Range, typename GetFeature>
MomentAccumulator accumulate_chunked(const Range& items, int d, unsigned threads, GetFeature get) {
  const std::size_t n = items.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<MomentAccumulator> parts(threads, MomentAccumulator(d));
  auto work = [&](unsigned t) {
    const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
    for (std::size_t i = lo; i < hi; ++i) parts[t].add(get(items[i]));
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  MomentAccumulator total(d);
  for (const auto& p : parts) total = merge(total, p);
  return total;
}

// ---------------------------------------------------------------------------

/// Shared negative-class moments with a cached Cholesky factor of sigma.
struct BackgroundStats {
  Vec mu_neg;
  Mat sigma;  // includes the ridge term
  std::uint64_t pi_neg = 0;
  Mat chol;  // lower triangular, sigma = chol * chol^T

  int dim() const { return static_cast<int>(mu_neg.size()); }

  /// Solves sigma * x = rhs with two triangular solves.
  Vec solve(const Vec& rhs) const {
    if (rhs.size() != mu_neg.size()) throw Error(ErrorKind::DimensionMismatch, "background solve: dimension mismatch");
    Vec y = chol.triangularView<Eigen::Lower>().solve(rhs);
    return chol.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  /// Hash of the serialized bytes; checkpoints record it to pin the
  /// background they were produced with.
  std::uint64_t fingerprint() const;
};

/// Builds BackgroundStats from explicit moments, factorizing sigma.
inline BackgroundStats make_background(Vec mu_neg, Mat sigma, std::uint64_t pi_neg) {
  if (sigma.rows() != mu_neg.size() || sigma.cols() != mu_neg.size())
    throw Error(ErrorKind::DimensionMismatch, "background: sigma shape does not match mean");
  if (pi_neg < 2) throw Error(ErrorKind::InsufficientSamples, "background: need at least 2 samples, got " + std::to_string(pi_neg));
  BackgroundStats bg;
  bg.mu_neg = std::move(mu_neg);
  bg.sigma = std::move(sigma);
  bg.pi_neg = pi_neg;
  Eigen::LLT<Mat> llt(bg.sigma);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NotPositiveDefinite, "background: Cholesky factorization failed (increase ridge_lambda)");
  bg.chol = llt.matrixL();
  for (Eigen::Index i = 0; i < bg.chol.rows(); ++i)
    if (!(bg.chol(i, i) > 0))
      throw Error(ErrorKind::NotPositiveDefinite, "background: non-positive Cholesky pivot (increase ridge_lambda)");
  return bg;
}

inline BackgroundStats finalize_background(const MomentAccumulator& acc, double ridge_lambda) {
  if (acc.count() < 2)
    throw Error(ErrorKind::InsufficientSamples, "finalize_background: need at least 2 samples, got " + std::to_string(acc.count()));
  if (!(ridge_lambda >= 0)) throw Error(ErrorKind::InvalidArgument, "finalize_background: ridge_lambda must be >= 0");
  Mat sigma = acc.covariance();
  sigma.diagonal().array() += ridge_lambda;
  return make_background(acc.mean(), std::move(sigma), acc.count());
}

inline std::string background_to_bytes(const BackgroundStats& bg) {
  std::string out = "DMBG";
  io::put_u32(out, static_cast<std::uint32_t>(bg.dim()));
  for (Eigen::Index i = 0; i < bg.mu_neg.size(); ++i) io::put_f64(out, bg.mu_neg[i]);
  for (Eigen::Index r = 0; r < bg.sigma.rows(); ++r)
    for (Eigen::Index c = 0; c < bg.sigma.cols(); ++c) io::put_f64(out, bg.sigma(r, c));
  io::put_u64(out, bg.pi_neg);
  return out;
}

inline BackgroundStats background_from_bytes(std::string_view bytes) {
  io::ByteReader rd(bytes);
  if (rd.take(4) != "DMBG") throw Error(ErrorKind::Format, "bad magic, expected DMBG");
  const auto d = Eigen::Index(rd.u32());
  Vec mu(d);
  for (Eigen::Index i = 0; i < d; ++i) mu[i] = rd.f64();
  Mat sigma(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) sigma(r, c) = rd.f64();
  auto pi = rd.u64();
  if (!rd.done()) throw Error(ErrorKind::Format, "DMBG: trailing bytes");
  return make_background(std::move(mu), std::move(sigma), pi);
}

inline std::uint64_t BackgroundStats::fingerprint() const { return detail::fnv1a(background_to_bytes(*this)); }

inline void write_background(const std::filesystem::path& path, const BackgroundStats& bg) {
  io::write_file(path, background_to_bytes(bg));
}

inline BackgroundStats read_background(const std::filesystem::path& path) {
  return background_from_bytes(io::read_file(path));
}

// ---------------------------------------------------------------------------

struct LinearClassifier {
  Vec w;
  double b = 0;
};

/// Closed-form LDA against the shared background:
///   w = sigma^-1 (mu+ - mu-)
///   b = log(pi+/pi-) - 1/2 (mu+ - mu-)^T sigma^-1 (mu+ + mu-)
inline LinearClassifier lda_train(const Vec& mu_pos, std::uint64_t pi_pos, const BackgroundStats& bg) {
  if (mu_pos.size() != bg.mu_neg.size())
    throw Error(ErrorKind::DimensionMismatch, "lda_train: mean has dimension " + std::to_string(mu_pos.size()) +
                                                  ", background has " + std::to_string(bg.mu_neg.size()));
  if (pi_pos < 1) throw Error(ErrorKind::InvalidArgument, "lda_train: pi_pos must be >= 1");
  LinearClassifier clf;
  clf.w = bg.solve(mu_pos - bg.mu_neg);
  clf.b = std::log(double(pi_pos) / double(bg.pi_neg)) - 0.5 * clf.w.dot(mu_pos + bg.mu_neg);
  return clf;
}

inline double lda_score(const LinearClassifier& clf, const Vec& f) {
  if (f.size() != clf.w.size()) throw Error(ErrorKind::DimensionMismatch, "lda_score: dimension mismatch");
  return clf.w.dot(f) + clf.b;
}

/// Cosine of the angle between a and b. A zero vector yields 0 and a warning.
inline double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "cosine_similarity: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) {
    warn("cosine_similarity: zero-norm vector (degenerate slot), similarity set to 0");
    return 0.0;
  }
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace dualmem
