#include "rqdyn/qops.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <stdexcept>

namespace rqdyn {

namespace {

void check_dim(int d) {
    if (d < 1 || d > kMaxDim)
        throw std::invalid_argument("dimension must be in [1, 8]");
}

void check_hermitian(const Mat& m, double tol, const char* what) {
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument(std::string(what) + ": not Hermitian");
}

}  // namespace

DensityMatrix::DensityMatrix(Mat m) : m_(std::move(m)) {
    check_dim(static_cast<int>(m_.rows()));
    if (m_.rows() != m_.cols()) throw std::invalid_argument("DensityMatrix: not square");
    check_hermitian(m_, kHermTol, "DensityMatrix");
    if (std::abs(m_.trace().real() - 1.0) > kTraceTol || std::abs(m_.trace().imag()) > kTraceTol)
        throw std::invalid_argument("DensityMatrix: trace != 1");
    Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < kPsdTol)
        throw std::invalid_argument("DensityMatrix: negative eigenvalue");
}

KrausChannel::KrausChannel(std::vector<Mat> ops) : ops_(std::move(ops)) {
    if (ops_.empty()) throw std::invalid_argument("KrausChannel: needs at least one operator");
    const auto d = ops_.front().rows();
    check_dim(static_cast<int>(d));
    for (const auto& c : ops_)
        if (c.rows() != d || c.cols() != d)
            throw std::invalid_argument("KrausChannel: operator dimension mismatch");
    Mat acc = Mat::Zero(d, d);
    for (const auto& c : ops_) acc += c.adjoint() * c;
    if ((acc - Mat::Identity(d, d)).norm() > kKrausTol)
        throw std::invalid_argument("KrausChannel: operators do not resolve the identity");
}

Hamiltonian::Hamiltonian(Mat h) : h_(std::move(h)) {
    check_dim(static_cast<int>(h_.rows()));
    if (h_.rows() != h_.cols()) throw std::invalid_argument("Hamiltonian: not square");
    check_hermitian(h_, kHermTol, "Hamiltonian");
    Eigen::SelfAdjointEigenSolver<Mat> es(h_);
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
}

Mat Hamiltonian::propagator(double t) const {
    Vec phases(evals_.size());
    for (Eigen::Index i = 0; i < evals_.size(); ++i)
        phases[i] = std::exp(cplx(0.0, -evals_[i] * t));
    return evecs_ * phases.asDiagonal() * evecs_.adjoint();
}

Observable::Observable(Mat a, std::string name) : a_(std::move(a)), name_(std::move(name)) {
    check_dim(static_cast<int>(a_.rows()));
    check_hermitian(a_, kHermTol, "Observable");
}

KrausReport validate_kraus(const KrausChannel& channel) {
    const int d = channel.dim();
    Mat acc = Mat::Zero(d, d);
    for (const auto& c : channel.operators()) acc += c.adjoint() * c;
    const double dev = (acc - Mat::Identity(d, d)).norm();
    return {dev <= kKrausTol, dev};
}

Mat apply_channel_raw(const KrausChannel& channel, const Mat& rho) {
    Mat out = Mat::Zero(rho.rows(), rho.cols());
    for (const auto& c : channel.operators()) out += c * rho * c.adjoint();
    return out;
}

DensityMatrix apply_channel(const KrausChannel& channel, const DensityMatrix& rho) {
    if (channel.dim() != rho.dim())
        throw std::invalid_argument("apply_channel: dimension mismatch");
    return DensityMatrix(apply_channel_raw(channel, rho.matrix()));
}

Mat apply_channel_dual(const KrausChannel& channel, const Mat& x) {
    Mat out = Mat::Zero(x.rows(), x.cols());
    for (const auto& c : channel.operators()) out += c.adjoint() * x * c;
    return out;
}

Mat channel_superop(const KrausChannel& channel) {
    const int d = channel.dim();
    Mat s = Mat::Zero(d * d, d * d);
    for (const auto& c : channel.operators())
        s += Eigen::kroneckerProduct(c.conjugate(), c).eval();
    return s;
}

Mat event_generator(const KrausChannel& channel) {
    const int d = channel.dim();
    return channel_superop(channel) - Mat::Identity(d * d, d * d);
}

Mat liouvillian_superop(const Hamiltonian& h) {
    const int d = h.dim();
    const Mat& m = h.matrix();
    const Mat id = Mat::Identity(d, d);
    // vec(-i (H rho - rho H)) with column-major vec(A X B) = (B^T kron A) vec(X)
    return cplx(0.0, -1.0) * (Eigen::kroneckerProduct(id, m).eval() -
                              Eigen::kroneckerProduct(m.transpose(), id).eval());
}

Mat evolve_unitary(const Hamiltonian& h, const Mat& rho, double dt) {
    const Mat u = h.propagator(dt);
    return u * rho * u.adjoint();
}

DensityMatrix unitary_step(const Hamiltonian& h, const DensityMatrix& rho, double dt) {
    if (dt < 0.0) throw std::invalid_argument("unitary_step: dt must be >= 0");
    return DensityMatrix(evolve_unitary(h, rho.matrix(), dt));
}

double expect_raw(const Mat& rho, const Mat& a) { return (rho * a).trace().real(); }

double expect(const DensityMatrix& rho, const Observable& a) {
    if (rho.dim() != a.dim()) throw std::invalid_argument("expect: dimension mismatch");
    return expect_raw(rho.matrix(), a.matrix());
}

Mat pauli_x() {
    Mat m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}
Mat pauli_y() {
    Mat m(2, 2);
    m << cplx(0, 0), cplx(0, -1), cplx(0, 1), cplx(0, 0);
    return m;
}
Mat pauli_z() {
    Mat m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}
Mat identity(int dim) { return Mat::Identity(dim, dim); }

}  // namespace rqdyn
