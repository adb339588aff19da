#include "alchemist/testlib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist::testlib {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

std::vector<double> to_vector(const RowMajor& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace

EigenPairs block_power_iteration(const Eigen::MatrixXd& gram, int k, const PowerPolicy& policy) {
    const auto n = static_cast<int>(gram.rows());
    if (gram.cols() != n) throw Error(ErrorCode::kBadArguments, "Gram matrix must be square");
    if (k < 1 || k > n) {
        throw Error(ErrorCode::kBadArguments, fmt::format("rank {} outside [1, {}]", k, n));
    }
    const int block = std::min(n, k + std::max(k, 10));

    std::mt19937_64 rng(policy.seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd start(n, block);
    for (Eigen::Index c = 0; c < start.cols(); ++c) {
        for (Eigen::Index r = 0; r < start.rows(); ++r) start(r, c) = normal(rng);
    }

    EigenPairs out;
    Eigen::MatrixXd z = gram * start;
    for (int it = 1; it <= policy.max_iterations; ++it) {
        const Eigen::MatrixXd q = thin_q(z);
        const Eigen::MatrixXd gq = gram * q;
        Eigen::MatrixXd t = q.transpose() * gq;
        t = 0.5 * (t + t.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(t);
        // Eigen sorts ascending; Ritz pairs are taken largest first.
        const Eigen::MatrixXd w = solver.eigenvectors().rowwise().reverse();
        const Eigen::VectorXd lambda = solver.eigenvalues().reverse();

        const Eigen::MatrixXd x = q * w;
        z = gq * w;  // = G x, feeds the next iteration

        const double scale = std::max(std::abs(lambda(0)), std::numeric_limits<double>::min());
        double residual = 0.0;
        for (int c = 0; c < k; ++c) {
            residual = std::max(residual, (z.col(c) - lambda(c) * x.col(c)).norm() / scale);
        }
        if (lambda(0) == 0.0) residual = 0.0;

        out.values = lambda.head(k);
        out.vectors = x.leftCols(k);
        out.iterations = it;
        out.residual = residual;
        if (residual < policy.tolerance || block == n) break;
    }
    return out;
}

Eigen::VectorXd canonicalize_signs(Eigen::MatrixXd& vectors) {
    Eigen::VectorXd signs = Eigen::VectorXd::Ones(vectors.cols());
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index best = 0;
        for (Eigen::Index r = 1; r < vectors.rows(); ++r) {
            if (std::abs(vectors(r, c)) > std::abs(vectors(best, c))) best = r;
        }
        if (vectors.rows() > 0 && vectors(best, c) < 0) {
            vectors.col(c) *= -1.0;
            signs(c) = -1.0;
        }
    }
    return signs;
}

SvdHandles truncated_svd(TaskContext& ctx, const MatrixInfo& a, std::int64_t k) {
    const auto min_dim = static_cast<std::int64_t>(std::min(a.rows, a.cols));
    if (k < 1 || k > min_dim) {
        throw Error(ErrorCode::kBadArguments,
                    fmt::format("rank {} outside [1, {}] for a {}x{} matrix", k, min_dim, a.rows, a.cols));
    }
    // Partial Gram sums need whole rows on each worker.
    const bool regrid = a.layout != kVcStar;
    const MatrixInfo work = regrid ? redistribute(ctx, a, kVcStar) : a;
    const auto n = static_cast<Eigen::Index>(a.cols);

    std::vector<Eigen::MatrixXd> partial(ctx.grid().size());
    ctx.for_each_worker([&](WorkerSlot& slot) {
        const LocalMatrix& local = slot.matrix(work.id);
        const auto values = local.values();
        const Eigen::Map<const RowMajor> block(values.data(), static_cast<Eigen::Index>(local.local_rows()), n);
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
        g.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
        partial[slot.rank] = g.selfadjointView<Eigen::Lower>();
    });
    // Reduce in rank order so the sum is reproducible.
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    for (const auto& g : partial) gram += g;

    const EigenPairs pairs = block_power_iteration(gram, static_cast<int>(k));
    Eigen::MatrixXd v = pairs.vectors;
    canonicalize_signs(v);
    Eigen::VectorXd sigma = pairs.values.cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd inverse(sigma.size());
    const double floor = sigma.size() > 0 ? sigma(0) * std::numeric_limits<double>::epsilon() : 0.0;
    for (Eigen::Index c = 0; c < sigma.size(); ++c) {
        inverse(c) = sigma(c) > floor ? 1.0 / sigma(c) : 0.0;
    }

    SvdHandles out;
    out.u = ctx.create_output(a.rows, static_cast<Index>(k), kVcStar);
    out.s = ctx.create_output(static_cast<Index>(k), 1, kVcStar);
    out.v = ctx.create_output(a.cols, static_cast<Index>(k), kVcStar);

    const Eigen::MatrixXd projector = v * inverse.asDiagonal();
    ctx.for_each_worker([&](WorkerSlot& slot) {
        const LocalMatrix& local = slot.matrix(work.id);
        const auto values = local.values();
        const Eigen::Map<const RowMajor> block(values.data(), static_cast<Eigen::Index>(local.local_rows()), n);
        const RowMajor u_rows = block * projector;
        slot.matrix(out.u.id).assign(to_vector(u_rows));
    });
    scatter_dense(ctx, out.s, std::vector<double>(sigma.data(), sigma.data() + sigma.size()));
    const RowMajor v_rows = v;
    scatter_dense(ctx, out.v, to_vector(v_rows));

    if (regrid) ctx.release(work.id);
    return out;
}

MatrixInfo multiply(TaskContext& ctx, const MatrixInfo& a, const MatrixInfo& b) {
    if (a.cols != b.rows) {
        throw Error(ErrorCode::kBadArguments,
                    fmt::format("cannot multiply {}x{} by {}x{}", a.rows, a.cols, b.rows, b.cols));
    }
    const bool regrid = a.layout != kVcStar;
    const MatrixInfo work = regrid ? redistribute(ctx, a, kVcStar) : a;
    // B is broadcast through the driver; every worker multiplies its own rows of A.
    const auto b_dense = gather_dense(ctx, b);
    const Eigen::Map<const RowMajor> bm(b_dense.data(), static_cast<Eigen::Index>(b.rows),
                                        static_cast<Eigen::Index>(b.cols));
    const MatrixInfo c = ctx.create_output(a.rows, b.cols, kVcStar);
    ctx.for_each_worker([&](WorkerSlot& slot) {
        const LocalMatrix& local = slot.matrix(work.id);
        const auto values = local.values();
        const Eigen::Map<const RowMajor> block(values.data(), static_cast<Eigen::Index>(local.local_rows()),
                                               static_cast<Eigen::Index>(a.cols));
        const RowMajor rows = block * bm;
        slot.matrix(c.id).assign(to_vector(rows));
    });
    if (regrid) ctx.release(work.id);
    return c;
}

// ---------------------------------------------------------------------------

const SimState& Simulator::reset() {
    state_ = SimState{};
    return state_;
}

const SimState& Simulator::step(double action) {
    if (!std::isfinite(action)) {
        throw Error(ErrorCode::kInvalidAction, fmt::format("action {} is not finite", action));
    }
    const double moved = state_.x + std::clamp(action, -kMaxStep, kMaxStep);
    state_.x = std::round(moved / kResolution) / (1.0 / kResolution);
    ++state_.step_count;
    return state_;
}

double Simulator::score() const noexcept { return 0.0 - std::abs(state_.x - state_.target); }

// ---------------------------------------------------------------------------

namespace {

void expect_arity(std::string_view fn, std::span<const Value> args, std::size_t n) {
    if (args.size() != n) {
        throw Error(ErrorCode::kBadArguments,
                    fmt::format("{} takes {} argument(s), got {}", fn, n, args.size()));
    }
}

HandleId handle_arg(std::string_view fn, std::span<const Value> args, std::size_t at) {
    if (const auto* h = std::get_if<HandleRef>(&args[at])) return h->id;
    if (const auto* m = std::get_if<MatrixInfo>(&args[at])) return m->id;
    throw Error(ErrorCode::kBadArguments, fmt::format("{}: argument {} must be a matrix handle", fn, at));
}

std::int64_t int_arg(std::string_view fn, std::span<const Value> args, std::size_t at) {
    if (const auto* v = std::get_if<std::int64_t>(&args[at])) return *v;
    throw Error(ErrorCode::kBadArguments, fmt::format("{}: argument {} must be an integer", fn, at));
}

double number_arg(std::string_view fn, std::span<const Value> args, std::size_t at) {
    if (const auto* v = std::get_if<double>(&args[at])) return *v;
    if (const auto* v = std::get_if<std::int64_t>(&args[at])) return static_cast<double>(*v);
    throw Error(ErrorCode::kBadArguments, fmt::format("{}: argument {} must be a number", fn, at));
}

std::vector<Value> state_values(const SimState& s) { return {s.x, s.target, s.step_count}; }

class Instance final : public LibraryInstance {
public:
    std::vector<Value> run(TaskContext& ctx, std::string_view fn, std::span<const Value> args) override {
        if (fn == "truncated_svd") {
            expect_arity(fn, args, 2);
            const MatrixInfo a = ctx.input(handle_arg(fn, args, 0));
            const auto out = truncated_svd(ctx, a, int_arg(fn, args, 1));
            return {out.u, out.s, out.v};
        }
        if (fn == "multiply") {
            expect_arity(fn, args, 2);
            const MatrixInfo a = ctx.input(handle_arg(fn, args, 0));
            const MatrixInfo b = ctx.input(handle_arg(fn, args, 1));
            return {multiply(ctx, a, b)};
        }
        if (fn == "reset") {
            expect_arity(fn, args, 0);
            return state_values(sim_.reset());
        }
        if (fn == "step") {
            expect_arity(fn, args, 1);
            auto out = state_values(sim_.step(number_arg(fn, args, 0)));
            out.emplace_back(sim_.score());
            return out;
        }
        if (fn == "get_state") {
            expect_arity(fn, args, 0);
            return state_values(sim_.state());
        }
        if (fn == "get_score") {
            expect_arity(fn, args, 0);
            return {sim_.score()};
        }
        throw Error(ErrorCode::kUnknownFunction, fmt::format("{} has no function '{}'", kName, fn));
    }

private:
    Simulator sim_;
};

}  // namespace

std::unique_ptr<LibraryInstance> make_instance() { return std::make_unique<Instance>(); }

}  // namespace alchemist::testlib
