#include "misp/embed.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <utility>

#include "misp/error.hpp"
#include "misp/rng.hpp"

namespace misp::embed {

namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v,
                    const char* what) {
  if (!v.allFinite()) {
    throw NumericError(std::string(what) + " contains non-finite entries");
  }
}

}  // namespace

Eigen::VectorXd fuse(const Eigen::Ref<const Eigen::VectorXd>& image_emb,
                     const Eigen::Ref<const Eigen::VectorXd>& text_emb) {
  if (image_emb.size() == 0 || text_emb.size() == 0) {
    throw DimensionError("fuse: embeddings must be non-empty");
  }
  require_finite(image_emb, "fuse: image embedding");
  require_finite(text_emb, "fuse: text embedding");

  const Eigen::Index dv = image_emb.size();
  const Eigen::Index dt = text_emb.size();
  Eigen::VectorXd out(dv * dt);
  for (Eigen::Index i = 0; i < dv; ++i) {
    out.segment(i * dt, dt) = image_emb(i) * text_emb;
  }
  return out;
}

Eigen::VectorXd difference(const Eigen::Ref<const Eigen::VectorXd>& positive,
                           const Eigen::Ref<const Eigen::VectorXd>& candidate) {
  if (positive.size() != candidate.size()) {
    throw DimensionError("difference: length mismatch (" +
                         std::to_string(positive.size()) + " vs " +
                         std::to_string(candidate.size()) + ")");
  }
  return positive - candidate;
}

DifferenceVector difference(const Eigen::Ref<const Eigen::VectorXd>& positive,
                            const Eigen::Ref<const Eigen::VectorXd>& candidate,
                            std::string candidate_id) {
  return DifferenceVector{std::move(candidate_id),
                          difference(positive, candidate)};
}

double cosine(const Eigen::Ref<const Eigen::VectorXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine: length mismatch");
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    throw DegenerateInputError("cosine: zero-norm input");
  }
  const double c = u.dot(v) / (nu * nv);
  // Rounding can push |c| a hair past 1; clamp so callers can rely on range.
  return std::clamp(c, -1.0, 1.0);
}

Eigen::VectorXd l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double n = v.norm();
  if (n == 0.0) {
    throw DegenerateInputError("l2_normalize: zero vector");
  }
  return v / n;
}

Eigen::MatrixXd project_2d(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) {
    throw InsufficientDataError("project_2d: need at least 2 vectors");
  }
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixV().cols());
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(rows.cols(), 2);
  axes.leftCols(k) = svd.matrixV().leftCols(k);

  // Sign convention: flip each axis so its largest-magnitude loading is
  // positive. Makes the projection unique and reruns byte-stable.
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index imax = 0;
    axes.col(c).cwiseAbs().maxCoeff(&imax);
    if (axes(imax, c) < 0.0) {
      axes.col(c) = -axes.col(c);
    }
  }
  return centered * axes;
}

SignProjection::SignProjection(Eigen::Index input_dim, Eigen::Index target_dim,
                               std::uint64_t seed)
    : input_dim_(input_dim), target_dim_(target_dim), seed_(seed) {
  if (input_dim < 1 || target_dim < 1) {
    throw DimensionError("SignProjection: dims must be positive");
  }
}

double SignProjection::sign_at(Eigen::Index t, Eigen::Index j) const {
  const std::uint64_t h = Rng::derive(
      seed_, static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(
                                                 input_dim_) +
                 static_cast<std::uint64_t>(j));
  return (h & 1u) ? 1.0 : -1.0;
}

Eigen::VectorXd SignProjection::apply(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != input_dim_) {
    throw DimensionError("SignProjection: input length mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(target_dim_));
  Eigen::VectorXd out(target_dim_);
  for (Eigen::Index t = 0; t < target_dim_; ++t) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < input_dim_; ++j) {
      acc += sign_at(t, j) * v(j);
    }
    out(t) = scale * acc;
  }
  return out;
}

Eigen::MatrixXd SignProjection::apply_rows(
    const Eigen::Ref<const Eigen::MatrixXd>& m) const {
  Eigen::MatrixXd out(m.rows(), target_dim_);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.row(r) = apply(m.row(r).transpose()).transpose();
  }
  return out;
}

}  // namespace misp::embed
