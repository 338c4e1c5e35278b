#include "bif/gp.hpp"

#include <nlohmann/json.hpp>

#include "bif/kernel.hpp"
#include "bif/lbfgs.hpp"

namespace bif {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Neumaier-compensated dot product. The predictive mean is a heavily
/// cancelling sum (|alpha_i k_i| can exceed the result by ~1e16 on
/// low-noise fits); plain summation floors Newton residuals around 1e-7.
double compensated_dot(const Vector& a, const Vector& b) {
    double sum = 0.0, comp = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double term = a[i] * b[i];
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term))
            comp += (sum - t) + term;
        else
            comp += (term - t) + sum;
        sum = t;
    }
    return sum + comp;
}

// Normalized units (unit input range, unit target variance). The upper
// caps keep the kernel out of the flat near-linear ridge where huge
// signal variances destroy the mean's numerical precision.
struct HyperBox {
    double log_len_lo = std::log(1e-3), log_len_hi = std::log(50.0);
    double log_sv_lo = std::log(1e-8), log_sv_hi = std::log(1e4);
    double log_nv_lo = std::log(1e-10), log_nv_hi = std::log(1e2);
};

Vector clamp_to_box(const Vector& theta, int d, bool learn_noise, const HyperBox& box) {
    Vector out = theta;
    for (int a = 0; a < d; ++a)
        out[a] = std::min(std::max(out[a], box.log_len_lo), box.log_len_hi);
    out[d] = std::min(std::max(out[d], box.log_sv_lo), box.log_sv_hi);
    if (learn_noise)
        out[d + 1] = std::min(std::max(out[d + 1], box.log_nv_lo), box.log_nv_hi);
    return out;
}

/// Negative log marginal likelihood in log-parameters, with squared
/// per-dimension distances cached across hyperparameter evaluations.
/// Returns +inf (rejecting the candidate) when the kernel matrix fails to
/// factor without jitter; fills *grad only when requested.
class MarginalLikelihood {
public:
    MarginalLikelihood(const Matrix& u, Vector y, double fixed_noise_var, bool learn_noise)
        : y_(std::move(y)), fixed_noise_var_(fixed_noise_var), learn_noise_(learn_noise) {
        const int n = static_cast<int>(u.rows());
        const int d = static_cast<int>(u.cols());
        sqdist_.reserve(d);
        for (int a = 0; a < d; ++a) {
            Matrix da(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double delta = u(i, a) - u(j, a);
                    da(i, j) = delta * delta;
                }
            sqdist_.push_back(std::move(da));
        }
    }

    double operator()(const Vector& theta, Vector* grad) const {
        const int n = static_cast<int>(y_.size());
        const int d = static_cast<int>(sqdist_.size());
        const double signal_variance = std::exp(theta[d]);
        const double noise_var = learn_noise_ ? std::exp(theta[d + 1]) : fixed_noise_var_;

        Matrix quad = Matrix::Zero(n, n);
        Vector inv_l2(d);
        for (int a = 0; a < d; ++a) {
            inv_l2[a] = std::exp(-2.0 * theta[a]);
            quad += inv_l2[a] * sqdist_[a];
        }
        Matrix k_nf = signal_variance * (-0.5 * quad).array().exp().matrix();
        Matrix k = k_nf;
        k.diagonal().array() += noise_var;

        Eigen::LLT<Matrix> llt(k);
        if (llt.info() != Eigen::Success) {
            if (grad) grad->setZero();
            return std::numeric_limits<double>::infinity();
        }
        Vector alpha = llt.solve(y_);
        double logdet = 0.0;
        for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixLLT()(i, i));
        const double nll = 0.5 * y_.dot(alpha) + logdet + 0.5 * n * kLog2Pi;

        if (grad) {
            const Matrix kinv = llt.solve(Matrix::Identity(n, n));
            const Matrix w = alpha * alpha.transpose() - kinv;  // d lml / dK = w / 2
            grad->resize(theta.size());
            const Matrix wk = w.cwiseProduct(k_nf);
            for (int a = 0; a < d; ++a)
                (*grad)[a] = -0.5 * inv_l2[a] * wk.cwiseProduct(sqdist_[a]).sum();
            (*grad)[d] = -0.5 * wk.sum();
            if (learn_noise_) (*grad)[d + 1] = -0.5 * noise_var * w.trace();
        }
        return nll;
    }

private:
    Vector y_;
    double fixed_noise_var_;
    bool learn_noise_;
    std::vector<Matrix> sqdist_;
};

}  // namespace

Matrix jittered_cholesky(const Matrix& cov, double jitter_start, double jitter_max,
                         double* jitter_used) {
    const int n = static_cast<int>(cov.rows());
    const double scale = std::max(cov.trace() / std::max(n, 1), 1e-300);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) {
        if (jitter_used) *jitter_used = 0.0;
        return llt.matrixL();
    }
    for (double level = jitter_start; level <= jitter_max * (1.0 + 1e-12); level *= 10.0) {
        Matrix k = cov;
        k.diagonal().array() += level * scale;
        llt.compute(k);
        if (llt.info() == Eigen::Success) {
            if (jitter_used) *jitter_used = level * scale;
            return llt.matrixL();
        }
    }
    throw NumericsError("jittered_cholesky: factorization failed up to jitter level " +
                        std::to_string(jitter_max) + ", condition estimate " +
                        std::to_string(condition_number(cov)));
}

Vector TrainedSurrogate::normalize_input(const Vector& x, double p) const {
    Vector u(input_dim());
    u.head(state_dim) = x;
    u[state_dim] = p;
    return (u - in_shift).cwiseQuotient(in_scale);
}

TrainedSurrogate fit(const ObservationDataset& data, const FitOptions& options) {
    const int n_obs = data.size();
    const int n = data.state_dim;
    const int d = n + 1;
    if (n_obs < 2) throw DimensionError("fit: need at least 2 observations");

    TrainedSurrogate gp;
    gp.state_dim = n;
    gp.noise_sigma = data.noise_sigma;

    const Matrix raw_in = data.inputs();
    const Matrix raw_out = data.targets();

    gp.in_shift = raw_in.colwise().mean();
    gp.in_scale.resize(d);
    for (int a = 0; a < d; ++a) {
        const double range = raw_in.col(a).maxCoeff() - raw_in.col(a).minCoeff();
        gp.in_scale[a] = range > 1e-12 ? range : 1.0;
    }
    gp.out_shift = raw_out.colwise().mean();
    gp.out_scale.resize(n);
    for (int c = 0; c < n; ++c) {
        const double var =
            (raw_out.col(c).array() - gp.out_shift[c]).square().sum() / std::max(n_obs - 1, 1);
        gp.out_scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }

    gp.train_norm =
        (raw_in.rowwise() - gp.in_shift.transpose()).array().rowwise() /
        gp.in_scale.transpose().array();

    for (int i = 0; i < n_obs; ++i)
        for (int j = i + 1; j < n_obs; ++j) {
            const double dist =
                (gp.train_norm.row(i) - gp.train_norm.row(j)).lpNorm<Eigen::Infinity>();
            if (dist < 1e-12 && data.noise_sigma == 0.0 &&
                (raw_out.row(i) - raw_out.row(j)).lpNorm<Eigen::Infinity>() > 1e-9)
                throw NumericsError(
                    "fit: duplicate inputs with conflicting targets at zero noise (rows " +
                    std::to_string(i) + ", " + std::to_string(j) + ")");
        }

    const HyperBox box;
    Rng rng(derive_seed(options.seed, 0x6f17));

    gp.components.resize(n);
    for (int c = 0; c < n; ++c) {
        Vector y = (raw_out.col(c).array() - gp.out_shift[c]) / gp.out_scale[c];
        const double fixed_noise_var =
            (data.noise_sigma / gp.out_scale[c]) * (data.noise_sigma / gp.out_scale[c]);

        const int n_theta = d + 1 + (options.learn_noise ? 1 : 0);
        const MarginalLikelihood nll(gp.train_norm, y, fixed_noise_var, options.learn_noise);
        // Quadratic penalty outside the hyperparameter box; a hard +inf
        // wall makes the line search thrash whenever the optimum sits on
        // the boundary.
        auto objective = [&](const Vector& theta, Vector* grad) -> double {
            const Vector clamped = clamp_to_box(theta, d, options.learn_noise, box);
            const Vector excess = theta - clamped;
            double f = nll(clamped, grad);
            if (excess.squaredNorm() > 0.0) {
                f += 1e3 * excess.squaredNorm();
                if (grad) *grad += 2e3 * excess;
            }
            return f;
        };

        Vector best_theta;
        double best_f = std::numeric_limits<double>::infinity();
        LbfgsOptions lopt;
        lopt.max_iters = options.max_iters;
        for (int start = 0; start < options.n_starts; ++start) {
            Vector theta0(n_theta);
            for (int a = 0; a < d; ++a)
                theta0[a] = rng.uniform(std::log(0.05), std::log(5.0));
            theta0[d] = rng.uniform(std::log(0.1), std::log(10.0));
            if (options.learn_noise) theta0[d + 1] = rng.uniform(std::log(1e-6), std::log(1e-1));
            LbfgsResult res = lbfgs_minimize(objective, theta0, lopt);
            if (res.f < best_f) {
                best_f = res.f;
                best_theta = res.x;
            }
        }
        if (!best_theta.size())
            throw NumericsError("fit: every hyperparameter start failed to factor");
        best_theta = clamp_to_box(best_theta, d, options.learn_noise, box);

        TrainedSurrogate::Component comp;
        comp.hp.lengthscales = best_theta.head(d).array().exp();
        comp.hp.signal_variance = std::exp(best_theta[d]);
        comp.hp.noise_variance =
            options.learn_noise
                ? std::max(std::exp(best_theta[d + 1]), options.learned_noise_floor)
                : fixed_noise_var;
        comp.y_norm = y;

        Matrix k = se_ard_gram(gp.train_norm, gp.train_norm, comp.hp.signal_variance,
                               comp.hp.lengthscales);
        k.diagonal().array() += comp.hp.noise_variance;
        comp.chol = jittered_cholesky(k, options.jitter_start, options.jitter_max,
                                      &comp.jitter_used);
        comp.alpha = comp.chol.transpose()
                         .triangularView<Eigen::Upper>()
                         .solve(comp.chol.triangularView<Eigen::Lower>().solve(y));
        double logdet = 0.0;
        for (int i = 0; i < n_obs; ++i) logdet += std::log(comp.chol(i, i));
        comp.log_marginal = -0.5 * y.dot(comp.alpha) - logdet - 0.5 * n_obs * kLog2Pi;
        gp.components[c] = std::move(comp);
    }
    return gp;
}

double log_marginal_likelihood(const TrainedSurrogate& gp, int component) {
    return gp.components.at(component).log_marginal;
}

MeanEval predict_mean_floor(const TrainedSurrogate& gp, const Vector& x, double p) {
    const int n = gp.state_dim;
    const Vector q = gp.normalize_input(x, p);
    MeanEval out;
    out.mean.resize(n);
    out.eval_floor.resize(n);
    for (int c = 0; c < n; ++c) {
        const auto& comp = gp.components[c];
        double sum = 0.0, compn = 0.0, abs_sum = 0.0;
        for (int i = 0; i < gp.n_train(); ++i) {
            const double term = comp.alpha[i] * se_ard(q, gp.train_norm.row(i).transpose(),
                                                       comp.hp.signal_variance,
                                                       comp.hp.lengthscales);
            abs_sum += std::abs(term);
            const double t = sum + term;
            if (std::abs(sum) >= std::abs(term))
                compn += (sum - t) + term;
            else
                compn += (term - t) + sum;
            sum = t;
        }
        out.mean[c] = gp.out_shift[c] + gp.out_scale[c] * (sum + compn);
        out.eval_floor[c] =
            8.0 * std::numeric_limits<double>::epsilon() * gp.out_scale[c] * abs_sum;
    }
    return out;
}

PredictiveDist predict(const TrainedSurrogate& gp, const Vector& x, double p) {
    const int n = gp.state_dim;
    const Vector q = gp.normalize_input(x, p);
    PredictiveDist out;
    out.mean.resize(n);
    out.variance.resize(n);
    for (int c = 0; c < n; ++c) {
        const auto& comp = gp.components[c];
        const int n_obs = gp.n_train();
        Vector kv(n_obs);
        for (int i = 0; i < n_obs; ++i)
            kv[i] = se_ard(q, gp.train_norm.row(i).transpose(), comp.hp.signal_variance,
                           comp.hp.lengthscales);
        const double mean_norm = compensated_dot(kv, comp.alpha);
        const Vector w = comp.chol.triangularView<Eigen::Lower>().solve(kv);
        const double var_norm = std::max(comp.hp.signal_variance - w.squaredNorm(), 0.0);
        out.mean[c] = gp.out_shift[c] + gp.out_scale[c] * mean_norm;
        out.variance[c] = gp.out_scale[c] * gp.out_scale[c] * var_norm;
    }
    return out;
}

Matrix predict_mean_jacobian(const TrainedSurrogate& gp, const Vector& x, double p) {
    const int n = gp.state_dim;
    const int d = gp.input_dim();
    const Vector q = gp.normalize_input(x, p);
    Matrix jac(n, d);
    for (int c = 0; c < n; ++c) {
        const auto& comp = gp.components[c];
        Vector g = Vector::Zero(d);
        for (int i = 0; i < gp.n_train(); ++i) {
            const Vector ui = gp.train_norm.row(i).transpose();
            const double kval = se_ard(q, ui, comp.hp.signal_variance, comp.hp.lengthscales);
            g += comp.alpha[i] * se_ard_grad(q, ui, kval, comp.hp.lengthscales);
        }
        jac.row(c) =
            (gp.out_scale[c] * g.array() / gp.in_scale.array()).transpose();
    }
    return jac;
}

std::vector<Matrix> predict_mean_mixed_second(const TrainedSurrogate& gp, const Vector& x,
                                              double p) {
    const int n = gp.state_dim;
    const int d = gp.input_dim();
    const Vector q = gp.normalize_input(x, p);
    std::vector<Matrix> out(n);
    const Matrix scale_outer = gp.in_scale * gp.in_scale.transpose();
    for (int c = 0; c < n; ++c) {
        const auto& comp = gp.components[c];
        Matrix h = Matrix::Zero(d, d);
        for (int i = 0; i < gp.n_train(); ++i) {
            const Vector ui = gp.train_norm.row(i).transpose();
            const double kval = se_ard(q, ui, comp.hp.signal_variance, comp.hp.lengthscales);
            h += comp.alpha[i] * se_ard_hess(q, ui, kval, comp.hp.lengthscales);
        }
        out[c] = gp.out_scale[c] * h.cwiseQuotient(scale_outer);
    }
    return out;
}

StdGradient predict_std_gradient(const TrainedSurrogate& gp, const Vector& x, double p) {
    const int n = gp.state_dim;
    const int d = gp.input_dim();
    const Vector q = gp.normalize_input(x, p);
    StdGradient out;
    out.grad = Matrix::Zero(n, d);
    for (int c = 0; c < n; ++c) {
        const auto& comp = gp.components[c];
        const int n_obs = gp.n_train();
        Vector kv(n_obs);
        Matrix dk(n_obs, d);
        for (int i = 0; i < n_obs; ++i) {
            const Vector ui = gp.train_norm.row(i).transpose();
            kv[i] = se_ard(q, ui, comp.hp.signal_variance, comp.hp.lengthscales);
            dk.row(i) = se_ard_grad(q, ui, kv[i], comp.hp.lengthscales).transpose();
        }
        const Vector w = comp.chol.transpose()
                             .triangularView<Eigen::Upper>()
                             .solve(comp.chol.triangularView<Eigen::Lower>().solve(kv));
        const double var_norm = std::max(comp.hp.signal_variance - kv.dot(w), 0.0);
        const double sigma_phys = gp.out_scale[c] * std::sqrt(var_norm);
        if (sigma_phys < 1e-12) {
            out.floored = true;
            continue;  // zero row; sigma sits at (or numerically below) a smooth minimum
        }
        const Vector dvar_norm = -2.0 * dk.transpose() * w;
        // d sigma / du = out_scale * dvar_norm / (2 sqrt(var_norm)) / in_scale
        out.grad.row(c) = (gp.out_scale[c] * dvar_norm.array() /
                           (2.0 * std::sqrt(var_norm)) / gp.in_scale.array())
                              .transpose();
    }
    return out;
}

void joint_posterior(const TrainedSurrogate& gp, int component, const Matrix& query_norm,
                     Vector& mean, Matrix& cov) {
    const auto& comp = gp.components[component];
    const Matrix k_star = se_ard_gram(gp.train_norm, query_norm, comp.hp.signal_variance,
                                      comp.hp.lengthscales);
    const Matrix k_qq =
        se_ard_gram(query_norm, query_norm, comp.hp.signal_variance, comp.hp.lengthscales);
    mean = k_star.transpose() * comp.alpha;
    const Matrix w = comp.chol.triangularView<Eigen::Lower>().solve(k_star);
    cov = k_qq - w.transpose() * w;
    cov = 0.5 * (cov + cov.transpose());
}

Matrix sample_realization(const TrainedSurrogate& gp,
                          const std::vector<std::pair<Vector, double>>& points,
                          std::uint64_t seed) {
    const int n_pts = static_cast<int>(points.size());
    const int n = gp.state_dim;
    Matrix query(n_pts, gp.input_dim());
    for (int i = 0; i < n_pts; ++i)
        query.row(i) = gp.normalize_input(points[i].first, points[i].second).transpose();

    Rng rng(seed);
    Matrix out(n_pts, n);
    for (int c = 0; c < n; ++c) {
        Vector mean;
        Matrix cov;
        joint_posterior(gp, c, query, mean, cov);
        const Matrix chol = jittered_cholesky(cov, 1e-12, 1e-6);
        const Vector z = rng.normal_vector(n_pts);
        const Vector vals = mean + chol * z;
        out.col(c) = gp.out_shift[c] + gp.out_scale[c] * vals.array();
    }
    return out;
}

nlohmann::json gp_to_json(const TrainedSurrogate& gp) {
    nlohmann::json j;
    j["state_dim"] = gp.state_dim;
    j["noise_sigma"] = gp.noise_sigma;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["in_shift"] = vec(gp.in_shift);
    j["in_scale"] = vec(gp.in_scale);
    j["out_shift"] = vec(gp.out_shift);
    j["out_scale"] = vec(gp.out_scale);
    j["train_norm"] = std::vector<std::vector<double>>();
    for (int i = 0; i < gp.n_train(); ++i)
        j["train_norm"].push_back(vec(gp.train_norm.row(i).transpose()));
    for (const auto& comp : gp.components) {
        nlohmann::json cj;
        cj["signal_variance"] = comp.hp.signal_variance;
        cj["lengthscales"] = vec(comp.hp.lengthscales);
        cj["noise_variance"] = comp.hp.noise_variance;
        cj["targets_norm"] = vec(comp.y_norm);
        j["components"].push_back(cj);
    }
    return j;
}

TrainedSurrogate gp_from_json(const nlohmann::json& j) {
    TrainedSurrogate gp;
    gp.state_dim = j.at("state_dim").get<int>();
    gp.noise_sigma = j.at("noise_sigma").get<double>();
    auto vec = [](const nlohmann::json& a) {
        Vector v(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
        return v;
    };
    gp.in_shift = vec(j.at("in_shift"));
    gp.in_scale = vec(j.at("in_scale"));
    gp.out_shift = vec(j.at("out_shift"));
    gp.out_scale = vec(j.at("out_scale"));
    const auto& rows = j.at("train_norm");
    gp.train_norm.resize(rows.size(), gp.input_dim());
    for (std::size_t i = 0; i < rows.size(); ++i)
        gp.train_norm.row(i) = vec(rows[i]).transpose();
    for (const auto& cj : j.at("components")) {
        TrainedSurrogate::Component comp;
        comp.hp.signal_variance = cj.at("signal_variance").get<double>();
        comp.hp.lengthscales = vec(cj.at("lengthscales"));
        comp.hp.noise_variance = cj.at("noise_variance").get<double>();
        comp.y_norm = vec(cj.at("targets_norm"));
        Matrix k = se_ard_gram(gp.train_norm, gp.train_norm, comp.hp.signal_variance,
                               comp.hp.lengthscales);
        k.diagonal().array() += comp.hp.noise_variance;
        comp.chol = jittered_cholesky(k, 1e-12, 1e-6, &comp.jitter_used);
        comp.alpha = comp.chol.transpose()
                         .triangularView<Eigen::Upper>()
                         .solve(comp.chol.triangularView<Eigen::Lower>().solve(comp.y_norm));
        double logdet = 0.0;
        for (int i = 0; i < gp.n_train(); ++i) logdet += std::log(comp.chol(i, i));
        comp.log_marginal =
            -0.5 * comp.y_norm.dot(comp.alpha) - logdet - 0.5 * gp.n_train() * kLog2Pi;
        gp.components.push_back(std::move(comp));
    }
    return gp;
}

}  // namespace bif
