#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

namespace misp::embed {

// A difference vector tagged with the candidate it came from.
struct DifferenceVector {
  std::string candidate_id;
  Eigen::VectorXd values;
};

// Vectorized outer product of an image embedding and a text embedding.
// Flattening is row-major with the image index outer: entry (i*d_t + j)
// equals image_emb[i] * text_emb[j]. The convention is fixed so fused files
// are stable across save/load; downstream operations are order-agnostic.
Eigen::VectorXd fuse(const Eigen::Ref<const Eigen::VectorXd>& image_emb,
                     const Eigen::Ref<const Eigen::VectorXd>& text_emb);

// Elementwise positive - candidate. Lengths must match.
Eigen::VectorXd difference(const Eigen::Ref<const Eigen::VectorXd>& positive,
                           const Eigen::Ref<const Eigen::VectorXd>& candidate);

DifferenceVector difference(const Eigen::Ref<const Eigen::VectorXd>& positive,
                            const Eigen::Ref<const Eigen::VectorXd>& candidate,
                            std::string candidate_id);

// Standard cosine similarity in [-1, 1]. Zero-norm inputs raise
// DegenerateInputError; callers that cannot tolerate that must filter first.
double cosine(const Eigen::Ref<const Eigen::VectorXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v);

// v / ||v||_2; zero vectors raise DegenerateInputError.
Eigen::VectorXd l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v);

// PCA projection of the rows onto the top-2 principal components.
// Deterministic: components are sorted by variance and each is sign-fixed so
// its largest-magnitude loading is positive. Requires >= 2 rows.
Eigen::MatrixXd project_2d(const Eigen::Ref<const Eigen::MatrixXd>& rows);

// Seeded random-sign projection for capping oversized fused dimensions.
// Row t of the implicit matrix has entries +-1/sqrt(target_dim) derived from
// (seed, t, j); nothing is materialized, so large input dims stay cheap.
// Off by default in the pipeline; enabled via the fuse command flags.
class SignProjection {
 public:
  SignProjection(Eigen::Index input_dim, Eigen::Index target_dim,
                 std::uint64_t seed);

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::Ref<const Eigen::MatrixXd>& m) const;

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index target_dim() const { return target_dim_; }

 private:
  double sign_at(Eigen::Index t, Eigen::Index j) const;

  Eigen::Index input_dim_;
  Eigen::Index target_dim_;
  std::uint64_t seed_;
};

}  // namespace misp::embed
