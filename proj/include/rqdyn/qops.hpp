#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

namespace rqdyn {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using cplx = std::complex<double>;

inline constexpr int kMaxDim = 8;

inline constexpr double kHermTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kPsdTol = -1e-10;
inline constexpr double kKrausTol = 1e-10;

/// d x d complex Hermitian, positive semidefinite, unit trace.
class DensityMatrix {
  public:
    explicit DensityMatrix(Mat m);
    const Mat& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }

  private:
    Mat m_;
};

/// Finite Kraus set {C_i} with sum_i C_i^dag C_i = I.
class KrausChannel {
  public:
    explicit KrausChannel(std::vector<Mat> ops);
    const std::vector<Mat>& operators() const { return ops_; }
    int dim() const { return static_cast<int>(ops_.front().rows()); }

  private:
    std::vector<Mat> ops_;
};

/// Hermitian generator of the unitary inter-event evolution (angular frequency units).
class Hamiltonian {
  public:
    explicit Hamiltonian(Mat h);
    const Mat& matrix() const { return h_; }
    int dim() const { return static_cast<int>(h_.rows()); }
    /// exp(-i H t)
    Mat propagator(double t) const;

  private:
    Mat h_;
    Eigen::VectorXd evals_;
    Mat evecs_;
};

/// Hermitian observable.
class Observable {
  public:
    explicit Observable(Mat a, std::string name = "obs");
    const Mat& matrix() const { return a_; }
    const std::string& name() const { return name_; }
    int dim() const { return static_cast<int>(a_.rows()); }

  private:
    Mat a_;
    std::string name_;
};

struct KrausReport {
    bool ok = false;
    double deviation = 0.0;  // || sum C_i^dag C_i - I ||
};

KrausReport validate_kraus(const KrausChannel& channel);

/// E[rho] = sum_i C_i rho C_i^dag as a raw linear map.
Mat apply_channel_raw(const KrausChannel& channel, const Mat& rho);
DensityMatrix apply_channel(const KrausChannel& channel, const DensityMatrix& rho);

/// Dual action E#[X] = sum_i C_i^dag X C_i.
Mat apply_channel_dual(const KrausChannel& channel, const Mat& x);

/// Channel as a dim^2 x dim^2 matrix on column-major vectorized states.
Mat channel_superop(const KrausChannel& channel);

/// Event generator L = E - 1 (same vectorized convention).
Mat event_generator(const KrausChannel& channel);

/// Liouvillian superoperator of -i[H, .] (vectorized).
Mat liouvillian_superop(const Hamiltonian& h);

Mat evolve_unitary(const Hamiltonian& h, const Mat& rho, double dt);
DensityMatrix unitary_step(const Hamiltonian& h, const DensityMatrix& rho, double dt);

double expect(const DensityMatrix& rho, const Observable& a);
double expect_raw(const Mat& rho, const Mat& a);

// Pauli helpers (dim 2).
Mat pauli_x();
Mat pauli_y();
Mat pauli_z();
Mat identity(int dim);

}  // namespace rqdyn
