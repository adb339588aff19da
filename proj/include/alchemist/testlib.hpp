#pragma once

// Built-in stand-in for an MPI-backed HPC library: distributed truncated SVD,
// matrix multiply and a small step/reset simulation environment.

#include <cstdint>
#include <memory>
#include <string_view>

#include <Eigen/Dense>

#include "alchemist/library.hpp"

namespace alchemist::testlib {

inline constexpr std::string_view kName = "testlib";

std::unique_ptr<LibraryInstance> make_instance();

// ---------------------------------------------------------------------------
// Truncated SVD via the Gram matrix.

struct PowerPolicy {
    int max_iterations = 300;
    double tolerance = 1e-12;
    std::uint64_t seed = 0x5eed;
};

struct EigenPairs {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // n x k, orthonormal columns
    int iterations = 0;
    double residual = 0.0;    // max_i |G v_i - l_i v_i| / l_1
};

/// Top-k eigenpairs of a symmetric positive semi-definite matrix by
/// oversampled block power iteration with Rayleigh-Ritz extraction.
EigenPairs block_power_iteration(const Eigen::MatrixXd& gram, int k, const PowerPolicy& policy = {});

/// Flips columns so each one's largest-magnitude entry is non-negative
/// (first such entry on ties). Returns the applied signs.
Eigen::VectorXd canonicalize_signs(Eigen::MatrixXd& vectors);

struct SvdHandles {
    MatrixInfo u;  // m x k
    MatrixInfo s;  // k x 1
    MatrixInfo v;  // n x k
};

/// Rank-k factorization of a complete distributed matrix. Outputs are [VC,STAR].
SvdHandles truncated_svd(TaskContext& ctx, const MatrixInfo& a, std::int64_t k);

/// C = A * B, stored [VC,STAR].
MatrixInfo multiply(TaskContext& ctx, const MatrixInfo& a, const MatrixInfo& b);

// ---------------------------------------------------------------------------
// Simulation environment: a point on a line seeking a target.

struct SimState {
    double x = 0.0;
    double target = 1.0;
    std::int64_t step_count = 0;

    friend bool operator==(const SimState&, const SimState&) = default;
};

class Simulator {
public:
    static constexpr double kMaxStep = 0.1;
    /// Positions are kept on a 1e-12 grid so repeated decimal steps land exactly.
    static constexpr double kResolution = 1e-12;

    const SimState& reset();
    /// Throws kInvalidAction for non-finite actions.
    const SimState& step(double action);
    const SimState& state() const noexcept { return state_; }
    double score() const noexcept;

private:
    SimState state_;
};

}  // namespace alchemist::testlib
