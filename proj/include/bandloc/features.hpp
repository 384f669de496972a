#pragma once

#include "bandloc/types.hpp"

#include <Eigen/Dense>

namespace bandloc {

/// Real feature layout for one CSI vector: [Re(v); Im(v)] with v already
/// flattened antenna-major, so the length is 2 * N_sc * n_antennas.
Eigen::VectorXd csi_to_features(const CsiVector& csi);

/// Inverse of csi_to_features.
CsiVector features_to_csi(const Eigen::VectorXd& features, const BandSpec& band,
                          int n_antennas);

/// Per-feature standardization statistics, computed on a training split and
/// stored with the model that uses them.
struct FeatureNorm {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev; // floored at 1e-12

    Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const; // columns = samples
    Eigen::VectorXd invert(const Eigen::VectorXd& normalized) const;
};

/// Statistics over the columns of `raw` (one column per sample).
FeatureNorm compute_feature_norm(const Eigen::MatrixXd& raw);

} // namespace bandloc
