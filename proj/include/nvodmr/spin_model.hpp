#pragma once

// NV ground-state spin Hamiltonian: electron S=1 coupled to the host 14N
// nuclear spin I=1.
//
// Basis ordering (used everywhere in this library): product states
// |m_S> (x) |m_I>, row/column index = 3*(m_S+1) + (m_I+1), so index 0 is
// |-1,-1>, index 4 is |0,0> and index 8 is |+1,+1>.
//
// H/h = D Sz^2 + gamma_e B.S - gamma_n B.I + A_par Sz Iz
//       + A_perp (Sx Ix + Sy Iy) + Q (Iz^2 - 2/3)
//
// With B along the NV axis the m_S = 0 -> -1 transition sits at
// gamma_e B - D for B above the level anticrossing. gamma_n is the 14N
// gyromagnetic ratio (positive), so the nuclear Zeeman term enters with a
// minus sign. A_par and A_perp are negative for 14N.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvodmr/error.hpp"

namespace nvodmr::spin {

using Complex = std::complex<double>;
using Matrix3c = Eigen::Matrix<Complex, 3, 3>;
using Matrix9c = Eigen::Matrix<Complex, 9, 9>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

inline constexpr int dimension = 9;

struct NvParameters {
    double d_zfs = 2.87e9;      ///< zero-field splitting [Hz]
    double gamma_e = 28.03e9;   ///< electron gyromagnetic ratio g mu_B / h [Hz/T]
    // 14N literature values; not pinned by any measurement reproduced here.
    double gamma_n = 3.077e6;   ///< 14N gyromagnetic ratio [Hz/T]
    double a_par = -2.16e6;     ///< axial hyperfine [Hz]
    double a_perp = -2.70e6;    ///< transverse hyperfine [Hz]
    double q_quad = -4.945e6;   ///< nuclear quadrupole [Hz]

    void validate() const {
        detail::require_positive(d_zfs, "d_zfs");
        detail::require_positive(gamma_e, "gamma_e");
        detail::require_finite(gamma_n, "gamma_n");
        detail::require_finite(a_par, "a_par");
        detail::require_finite(a_perp, "a_perp");
        detail::require_finite(q_quad, "q_quad");
    }

    /// Same parameters with every coupling except D and gamma_e switched off.
    [[nodiscard]] NvParameters electron_only() const {
        NvParameters p = *this;
        p.gamma_n = 0.0;
        p.a_par = 0.0;
        p.a_perp = 0.0;
        p.q_quad = 0.0;
        return p;
    }
};

/// Static bias field. Angles are measured from the NV symmetry axis.
struct StaticField {
    double magnitude = 0.0;     ///< [T]
    double polar_angle = 0.0;   ///< [rad]
    double azimuth = 0.0;       ///< [rad]

    static StaticField axial(double tesla) { return {tesla, 0.0, 0.0}; }

    [[nodiscard]] Eigen::Vector3d vector() const {
        return magnitude * Eigen::Vector3d(std::sin(polar_angle) * std::cos(azimuth),
                                           std::sin(polar_angle) * std::sin(azimuth),
                                           std::cos(polar_angle));
    }

    void validate() const {
        detail::require_non_negative(magnitude, "field magnitude");
        detail::require_finite(polar_angle, "polar angle");
        detail::require_finite(azimuth, "azimuth");
        if (magnitude > 10.0) {
            throw InvalidParameter("field magnitude above 10 T sanity bound");
        }
    }
};

struct SpinHamiltonian {
    Matrix9c matrix = Matrix9c::Zero();  ///< [Hz]
};

/// Quantum numbers of a product basis state.
struct SpinLabel {
    int m_s = 0;
    int m_i = 0;

    friend bool operator==(SpinLabel, SpinLabel) = default;
};

[[nodiscard]] constexpr int basis_index(SpinLabel l) noexcept {
    return 3 * (l.m_s + 1) + (l.m_i + 1);
}

[[nodiscard]] constexpr SpinLabel basis_label(int index) noexcept {
    return {index / 3 - 1, index % 3 - 1};
}

namespace operators {

/// Spin-1 matrices in the ordered basis (-1, 0, +1).
struct SpinOne {
    Matrix3c x, y, z;
};

inline const SpinOne& spin_one() {
    static const SpinOne ops = [] {
        Matrix3c plus = Matrix3c::Zero();
        plus(1, 0) = std::sqrt(2.0);
        plus(2, 1) = std::sqrt(2.0);
        const Matrix3c minus = plus.adjoint();
        SpinOne s;
        s.x = (plus + minus) / 2.0;
        s.y = (plus - minus) / Complex(0.0, 2.0);
        s.z = Matrix3c::Zero();
        s.z(0, 0) = -1.0;
        s.z(2, 2) = 1.0;
        return s;
    }();
    return ops;
}

inline Matrix9c kron(const Matrix3c& a, const Matrix3c& b) {
    Matrix9c out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
        }
    }
    return out;
}

inline Matrix9c electron(const Matrix3c& op) { return kron(op, Matrix3c::Identity()); }
inline Matrix9c nuclear(const Matrix3c& op) { return kron(Matrix3c::Identity(), op); }

}  // namespace operators

inline SpinHamiltonian build_hamiltonian(const NvParameters& params, const StaticField& field) {
    params.validate();
    field.validate();

    using namespace operators;
    const auto& s = spin_one();
    const Eigen::Vector3d b = field.vector();
    const Matrix3c id3 = Matrix3c::Identity();

    SpinHamiltonian h;
    h.matrix = params.d_zfs * electron(s.z * s.z);
    h.matrix += params.gamma_e * (b.x() * electron(s.x) + b.y() * electron(s.y) + b.z() * electron(s.z));
    h.matrix -= params.gamma_n * (b.x() * nuclear(s.x) + b.y() * nuclear(s.y) + b.z() * nuclear(s.z));
    h.matrix += params.a_par * kron(s.z, s.z);
    h.matrix += params.a_perp * (kron(s.x, s.x) + kron(s.y, s.y));
    h.matrix += params.q_quad * nuclear(s.z * s.z - (2.0 / 3.0) * id3);
    // Exact hermiticity regardless of rounding in the products above.
    h.matrix = (0.5 * (h.matrix + h.matrix.adjoint())).eval();
    return h;
}

struct Eigensystem {
    Vector9d values;    ///< ascending [Hz]
    Matrix9c vectors;   ///< column k belongs to values[k]
};

[[nodiscard]] inline bool is_hermitian(const Matrix9c& m, double rel_tol = 1e-12) {
    const double scale = std::max(m.norm(), 1.0);
    return (m - m.adjoint()).norm() <= rel_tol * scale;
}

inline Eigensystem eigensystem(const SpinHamiltonian& h) {
    if (!h.matrix.allFinite()) {
        throw InvalidParameter("Hamiltonian has non-finite entries");
    }
    if (!is_hermitian(h.matrix)) {
        throw InvalidParameter("Hamiltonian is not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<Matrix9c> solver(h.matrix);
    if (solver.info() != Eigen::Success) {
        throw InvalidParameter("eigen decomposition failed");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

enum class TransitionKind { electron, nuclear };

struct Transition {
    int state_i = 0;            ///< eigenstate index (lower energy)
    int state_j = 0;            ///< eigenstate index (higher energy)
    SpinLabel label_i;          ///< dominant product state of state_i
    SpinLabel label_j;
    double frequency = 0.0;     ///< [Hz]
    double dipole_weight = 0.0; ///< |<i|Sx|j>|^2 (electron) or |<i|Ix|j>|^2 (nuclear)
};

using TransitionTable = std::vector<Transition>;

/// Product state carrying the largest weight in an eigenvector.
[[nodiscard]] inline SpinLabel dominant_label(const Matrix9c& vectors, int column) {
    int best = 0;
    vectors.col(column).cwiseAbs2().maxCoeff(&best);
    return basis_label(best);
}

inline TransitionTable transitions(const SpinHamiltonian& h, TransitionKind kind) {
    const Eigensystem es = eigensystem(h);
    const auto& s = operators::spin_one();
    const Matrix9c drive = kind == TransitionKind::electron ? operators::electron(s.x)
                                                            : operators::nuclear(s.x);
    std::array<SpinLabel, dimension> labels;
    for (int k = 0; k < dimension; ++k) {
        labels[k] = dominant_label(es.vectors, k);
    }

    TransitionTable table;
    for (int i = 0; i < dimension; ++i) {
        for (int j = i + 1; j < dimension; ++j) {
            const int d_ms = std::abs(labels[i].m_s - labels[j].m_s);
            const int d_mi = std::abs(labels[i].m_i - labels[j].m_i);
            const bool selected = kind == TransitionKind::electron ? (d_ms == 1 && d_mi == 0)
                                                                   : (d_ms == 0 && d_mi == 1);
            if (!selected) {
                continue;
            }
            const Complex element = es.vectors.col(i).adjoint() * drive * es.vectors.col(j);
            table.push_back({i, j, labels[i], labels[j],
                             std::abs(es.values[j] - es.values[i]), std::norm(element)});
        }
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const Transition& a, const Transition& b) { return a.frequency < b.frequency; });
    return table;
}

inline TransitionTable transitions(const NvParameters& params, const StaticField& field,
                                   TransitionKind kind) {
    return transitions(build_hamiltonian(params, field), kind);
}

/// Electron transition m_S = 0 -> target_ms within nuclear sublevel m_i.
inline const Transition& find_electron_line(const TransitionTable& table, int target_ms, int m_i) {
    for (const auto& t : table) {
        const bool forward = t.label_i == SpinLabel{0, m_i} && t.label_j == SpinLabel{target_ms, m_i};
        const bool reverse = t.label_j == SpinLabel{0, m_i} && t.label_i == SpinLabel{target_ms, m_i};
        if (forward || reverse) {
            return t;
        }
    }
    throw InvalidParameter("no electron transition 0 -> " + std::to_string(target_ms) +
                           " for m_I = " + std::to_string(m_i));
}

/// Nuclear transition within electron manifold m_s connecting m_i_a and m_i_b.
inline const Transition& find_nuclear_line(const TransitionTable& table, int m_s, int m_i_a, int m_i_b) {
    for (const auto& t : table) {
        const bool forward = t.label_i == SpinLabel{m_s, m_i_a} && t.label_j == SpinLabel{m_s, m_i_b};
        const bool reverse = t.label_j == SpinLabel{m_s, m_i_a} && t.label_i == SpinLabel{m_s, m_i_b};
        if (forward || reverse) {
            return t;
        }
    }
    throw InvalidParameter("no nuclear transition " + std::to_string(m_i_a) + " <-> " +
                           std::to_string(m_i_b) + " in m_S = " + std::to_string(m_s));
}

}  // namespace nvodmr::spin
