#include "bandloc/features.hpp"

namespace bandloc {

Eigen::VectorXd csi_to_features(const CsiVector& csi) {
    csi.validate();
    const Eigen::Index n = static_cast<Eigen::Index>(csi.values.size());
    Eigen::VectorXd f(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        f[i] = csi.values[static_cast<size_t>(i)].real();
        f[n + i] = csi.values[static_cast<size_t>(i)].imag();
    }
    return f;
}

CsiVector features_to_csi(const Eigen::VectorXd& features, const BandSpec& band,
                          int n_antennas) {
    const Eigen::Index n =
        static_cast<Eigen::Index>(band.n_subcarriers) * static_cast<Eigen::Index>(n_antennas);
    if (features.size() != 2 * n)
        throw std::invalid_argument("features_to_csi: length mismatch");
    CsiVector csi;
    csi.band = band;
    csi.n_antennas = n_antennas;
    csi.values.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        csi.values[static_cast<size_t>(i)] = cd(features[i], features[n + i]);
    return csi;
}

Eigen::VectorXd FeatureNorm::apply(const Eigen::VectorXd& raw) const {
    if (raw.size() != mean.size())
        throw std::invalid_argument("FeatureNorm: feature length mismatch");
    return (raw - mean).cwiseQuotient(stddev);
}

Eigen::MatrixXd FeatureNorm::apply(const Eigen::MatrixXd& raw) const {
    if (raw.rows() != mean.size())
        throw std::invalid_argument("FeatureNorm: feature length mismatch");
    return (raw.colwise() - mean).array().colwise() / stddev.array();
}

Eigen::VectorXd FeatureNorm::invert(const Eigen::VectorXd& normalized) const {
    if (normalized.size() != mean.size())
        throw std::invalid_argument("FeatureNorm: feature length mismatch");
    return normalized.cwiseProduct(stddev) + mean;
}

FeatureNorm compute_feature_norm(const Eigen::MatrixXd& raw) {
    if (raw.cols() < 1)
        throw std::invalid_argument("compute_feature_norm: no samples");
    FeatureNorm norm;
    norm.mean = raw.rowwise().mean();
    Eigen::MatrixXd centered = raw.colwise() - norm.mean;
    norm.stddev = (centered.cwiseProduct(centered).rowwise().sum() /
                   static_cast<double>(raw.cols()))
                      .cwiseSqrt()
                      .cwiseMax(1e-12);
    return norm;
}

} // namespace bandloc
