#include "sip/exact_gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "sip/csv.hpp"
#include "sip/errors.hpp"

extern "C" {
void dpotrf_(const char* uplo, const int* n, double* a, const int* lda, int* info);
void dpotrs_(const char* uplo, const int* n, const int* nrhs, const double* a,
             const int* lda, double* b, const int* ldb, int* info);
void dpotri_(const char* uplo, const int* n, double* a, const int* lda, int* info);
}

namespace sip {

namespace {

// Lower-triangular Cholesky in place (column-major; symmetric input makes
// the layout irrelevant). Throws on failure.
void potrf_or_throw(Tensor& a, std::size_t n) {
    const int ni = static_cast<int>(n);
    int info = 0;
    const char uplo = 'L';
    dpotrf_(&uplo, &ni, a.data(), &ni, &info);
    if (info != 0) {
        throw NotPositiveDefiniteError(
            "gp: kernel matrix not positive definite (lapack info " +
                std::to_string(info) + ")",
            info > 0 ? static_cast<std::size_t>(info - 1) : 0);
    }
}

struct KernelWorkspace {
    Tensor sqdist;  // [N, N], pairwise squared distances, computed once
    std::size_t n = 0;

    explicit KernelWorkspace(const Tensor& x) {
        n = x.rows();
        sqdist = Tensor({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            sqdist.at(i, i) = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d = x[i] - x[j];
                sqdist.at(i, j) = d * d;
                sqdist.at(j, i) = d * d;
            }
        }
    }
};

struct FactoredKernel {
    Tensor rbf;   // signal_var * exp(-d^2 / (2 l^2)), no noise
    Tensor chol;  // factor of rbf + (noise + jitter) I, lapack layout
    double jitter = 0.0;
    double log_det = 0.0;  // log |K|
};

// Fills fk in place so the [N,N] buffers are reused across optimizer steps.
void build_and_factor_into(FactoredKernel& fk, const KernelWorkspace& ws,
                           double lengthscale, double signal_var,
                           double noise_var) {
    const std::size_t n = ws.n;
    if (fk.rbf.numel() != n * n) fk.rbf = Tensor({n, n});
    const double inv2l2 = 1.0 / (2.0 * lengthscale * lengthscale);
    for (std::size_t i = 0; i < n; ++i) {
        fk.rbf.at(i, i) = signal_var;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = signal_var * std::exp(-ws.sqdist.at(i, j) * inv2l2);
            fk.rbf.at(i, j) = v;
            fk.rbf.at(j, i) = v;
        }
    }
    const double base = 1e-6 * (signal_var + noise_var);
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        fk.chol = fk.rbf;
        for (std::size_t i = 0; i < n; ++i) {
            fk.chol.at(i, i) += noise_var + jitter;
        }
        try {
            potrf_or_throw(fk.chol, n);
            fk.jitter = jitter;
            fk.log_det = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                fk.log_det += 2.0 * std::log(fk.chol.at(i, i));
            }
            return;
        } catch (const NotPositiveDefiniteError&) {
            jitter = (jitter == 0.0) ? base : jitter * 10.0;
            if (jitter <= 0.0) jitter = 1e-12;
        }
    }
    throw ConditioningError("gp: kernel factorization failed at jitter " +
                                std::to_string(jitter / 10.0),
                            jitter / 10.0);
}

FactoredKernel build_and_factor(const KernelWorkspace& ws, double lengthscale,
                                double signal_var, double noise_var) {
    FactoredKernel fk;
    build_and_factor_into(fk, ws, lengthscale, signal_var, noise_var);
    return fk;
}

Tensor solve_with_factor(const FactoredKernel& fk, const Tensor& b, std::size_t n) {
    if (b.numel() != n) {
        throw ShapeError("gp: solve expects a length-N vector");
    }
    Tensor x = b;
    const int ni = static_cast<int>(n);
    const int nrhs = 1;
    int info = 0;
    const char uplo = 'L';
    dpotrs_(&uplo, &ni, &nrhs, fk.chol.data(), &ni, x.data(), &ni, &info);
    if (info != 0) {
        throw NumericalError("gp: solve failed (lapack info " + std::to_string(info) +
                             ")");
    }
    return x;
}

// Overwrites the factor with the full inverse of the factored matrix.
void invert_factor_in_place(Tensor& chol, std::size_t n) {
    const int ni = static_cast<int>(n);
    int info = 0;
    const char uplo = 'L';
    dpotri_(&uplo, &ni, chol.data(), &ni, &info);
    if (info != 0) {
        throw NumericalError("gp: inversion failed (lapack info " +
                             std::to_string(info) + ")");
    }
    // lapack's column-major lower triangle is this row-major buffer's
    // upper triangle; the other half still holds factor leftovers.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            chol.at(j, i) = chol.at(i, j);
        }
    }
}

Tensor inverse_from_factor(const FactoredKernel& fk, std::size_t n) {
    Tensor kinv = fk.chol;
    invert_factor_in_place(kinv, n);
    return kinv;
}

void check_xy(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || x.cols() != 1 || y.rank() != 1 || y.numel() != x.rows() ||
        x.rows() < 1) {
        throw ShapeError("gp: expected x [N,1] and y [N], got " + x.shape_str() +
                         " and " + y.shape_str());
    }
}

// Shared evaluation core. With grad_out set the factor inside fk is
// consumed by the in-place inversion, which is fine because every caller
// rebuilds fk before using it again.
double lml_core(const GpModel& m, const KernelWorkspace& ws, const Tensor& y,
                FactoredKernel& fk, std::array<double, 3>* grad_out) {
    const std::size_t n = ws.n;
    const double l = m.lengthscale();
    const double sv = m.signal_var();
    const double nv = m.noise_var();
    build_and_factor_into(fk, ws, l, sv, nv);
    Tensor alpha = solve_with_factor(fk, y, n);
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += y[i] * alpha[i];
    const double lml = -0.5 * quad - 0.5 * fk.log_det -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (grad_out == nullptr) return lml;

    invert_factor_in_place(fk.chol, n);
    const Tensor& kinv = fk.chol;

    // d lml / d theta_j = 1/2 (alpha^T dK alpha - <K^{-1}, dK>).
    // dK/dlog sv = rbf; dK/dlog l = rbf .* d^2 / l^2; dK/dlog nv = nv I.
    const double inv_l2 = 1.0 / (l * l);
    double g_sv = 0.0, g_l = 0.0, g_nv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* rbf_row = fk.rbf.data() + i * n;
        const double* sqd_row = ws.sqdist.data() + i * n;
        const double* kinv_row = kinv.data() + i * n;
        const double ai = alpha[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double dk_sv = rbf_row[j];
            const double dk_l = dk_sv * sqd_row[j] * inv_l2;
            const double w = ai * alpha[j] - kinv_row[j];
            g_sv += w * dk_sv;
            g_l += w * dk_l;
        }
        const double wd = ai * ai - kinv_row[i];
        g_nv += wd * nv;
    }
    (*grad_out)[0] = 0.5 * g_l;
    (*grad_out)[1] = 0.5 * g_sv;
    (*grad_out)[2] = 0.5 * g_nv;
    return lml;
}

}  // namespace

double GpModel::lengthscale() const { return std::exp(log_lengthscale); }
double GpModel::signal_var() const { return std::exp(log_signal_var); }
double GpModel::noise_var() const { return std::exp(log_noise_var); }

double log_marginal_likelihood(const GpModel& m, const Tensor& x, const Tensor& y) {
    check_xy(x, y);
    KernelWorkspace ws(x);
    FactoredKernel fk;
    return lml_core(m, ws, y, fk, nullptr);
}

std::pair<double, std::array<double, 3>> log_marginal_likelihood_grad(
    const GpModel& m, const Tensor& x, const Tensor& y) {
    check_xy(x, y);
    KernelWorkspace ws(x);
    FactoredKernel fk;
    std::array<double, 3> grad{};
    const double lml = lml_core(m, ws, y, fk, &grad);
    return {lml, grad};
}

GpModel fit_gp(const Tensor& x, const Tensor& y, const GpFitOptions& opt, Rng& rng,
               std::vector<double>* per_step_lml) {
    check_xy(x, y);
    if (opt.restarts < 1) throw ContractError("fit_gp: need restarts >= 1");

    GpModel best;
    double best_lml = -std::numeric_limits<double>::infinity();
    bool any_ok = false;
    std::string last_error = "none";
    const double log_floor = std::log(opt.noise_floor);
    KernelWorkspace ws(x);
    FactoredKernel fk;

    for (std::size_t r = 0; r < opt.restarts; ++r) {
        GpModel cur;
        cur.log_lengthscale = rng.uniform(opt.init_lo, opt.init_hi);
        cur.log_signal_var = rng.uniform(opt.init_lo, opt.init_hi);
        cur.log_noise_var = std::max(rng.uniform(opt.init_lo, opt.init_hi), log_floor);

        double adam_m[3] = {0, 0, 0};
        double adam_v[3] = {0, 0, 0};
        std::vector<double> track;
        track.reserve(opt.steps);
        double cur_lml = -std::numeric_limits<double>::infinity();
        bool diverged = false;

        for (std::size_t step = 0; step < opt.steps; ++step) {
            std::array<double, 3> grad{};
            try {
                cur_lml = lml_core(cur, ws, y, fk, &grad);
            } catch (const Error& e) {
                last_error = e.what();
                diverged = true;
                break;
            }
            if (!std::isfinite(cur_lml)) {
                last_error = "non-finite marginal likelihood";
                diverged = true;
                break;
            }
            track.push_back(cur_lml);
            double* params[3] = {&cur.log_lengthscale, &cur.log_signal_var,
                                 &cur.log_noise_var};
            const double t = static_cast<double>(step + 1);
            const double bc1 = 1.0 - std::pow(0.9, t);
            const double bc2 = 1.0 - std::pow(0.999, t);
            for (int j = 0; j < 3; ++j) {
                const double g = -grad[static_cast<std::size_t>(j)];  // ascent
                adam_m[j] = 0.9 * adam_m[j] + 0.1 * g;
                adam_v[j] = 0.999 * adam_v[j] + 0.001 * g * g;
                const double mhat = adam_m[j] / bc1;
                const double vhat = adam_v[j] / bc2;
                *params[j] -= opt.lr * mhat / (std::sqrt(vhat) + 1e-8);
            }
            cur.log_noise_var = std::max(cur.log_noise_var, log_floor);
        }
        if (diverged) continue;

        try {
            cur_lml = lml_core(cur, ws, y, fk, nullptr);
        } catch (const Error& e) {
            last_error = e.what();
            continue;
        }
        if (std::isfinite(cur_lml)) {
            any_ok = true;
            if (cur_lml > best_lml) {
                best_lml = cur_lml;
                best = cur;
                if (per_step_lml != nullptr) *per_step_lml = std::move(track);
            }
        }
    }
    if (!any_ok) {
        throw NumericalError("fit_gp: all restarts diverged (last error: " +
                             last_error + ")");
    }

    // Cache the predictive state.
    const std::size_t n = x.rows();
    build_and_factor_into(fk, ws, best.lengthscale(), best.signal_var(),
                          best.noise_var());
    best.x_train = x;
    best.alpha = solve_with_factor(fk, y, n);
    best.kinv = inverse_from_factor(fk, n);
    best.fitted = true;
    return best;
}

std::pair<Tensor, Tensor> posterior_predict(const GpModel& m, const Tensor& x_star) {
    if (!m.fitted) throw ContractError("posterior_predict: model is not fitted");
    if (x_star.rank() != 2 || x_star.cols() != 1) {
        throw ShapeError("posterior_predict: x_star must be [N*,1], got " +
                         x_star.shape_str());
    }
    const std::size_t n = m.x_train.rows();
    const std::size_t ns = x_star.rows();
    const double l = m.lengthscale();
    const double sv = m.signal_var();
    const double nv = m.noise_var();
    const double inv2l2 = 1.0 / (2.0 * l * l);

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Mat kstar(n, ns);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ns; ++j) {
            const double d = m.x_train[i] - x_star[j];
            kstar(i, j) = sv * std::exp(-d * d * inv2l2);
        }
    }
    Eigen::Map<const Mat> kinv(m.kinv.data(), n, n);
    Eigen::Map<const Eigen::VectorXd> alpha(m.alpha.data(), n);
    Eigen::VectorXd mu = kstar.transpose() * alpha;
    Mat v = kinv * kstar;
    Eigen::VectorXd quad = (kstar.array() * v.array()).colwise().sum();

    Tensor mean = Tensor::zeros({ns});
    Tensor var = Tensor::zeros({ns});
    for (std::size_t j = 0; j < ns; ++j) {
        mean[j] = mu[static_cast<Eigen::Index>(j)];
        var[j] = std::max(sv - quad[static_cast<Eigen::Index>(j)], 0.0) + nv;
    }
    return {std::move(mean), std::move(var)};
}

void dump_gp_predictive(const GpModel& m, const Tensor& x_star,
                        const std::string& path) {
    auto [mean, var] = posterior_predict(m, x_star);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(mean.numel());
    for (std::size_t i = 0; i < mean.numel(); ++i) {
        rows.push_back({format_sig17(x_star[i]), format_sig17(mean[i]),
                        format_sig17(std::sqrt(var[i]))});
    }
    write_csv(path, {"x", "mean", "std"}, rows);
}

}  // namespace sip
