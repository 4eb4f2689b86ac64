#include "promptlab/prompt_grad.hpp"

#include "promptlab/errors.hpp"
#include "promptlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace plab {

void MemorizationTask::validate(Index d, double slack) const
{
    if (!(eps > 0.0)) throw PreconditionError("memorization task: eps must be positive");
    if (!(radius > 0.0)) throw PreconditionError("memorization task: radius must be positive");
    if (pairs.empty()) return;
    const Index m = pairs.front().x.cols();
    if (m < 1) throw ShapeError("memorization task: inputs need at least one token");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const std::string at = "pair " + std::to_string(i);
        if (p.x.rows() != d || p.y.rows() != d)
            throw ShapeError(at + ": embedding dimension differs from the model's d = " + std::to_string(d));
        if (p.x.cols() != m || p.y.cols() != m) throw ShapeError(at + ": token count differs from pair 0");
        for (Index j = 0; j < m; ++j) {
            if (vector_norm(p.x.col(j), norm) > radius + slack)
                throw PreconditionError(at + ": input column " + std::to_string(j) + " lies outside the radius ball");
            if (vector_norm(p.y.col(j), norm) > radius + slack)
                throw PreconditionError(at + ": target column " + std::to_string(j) + " lies outside the radius ball");
        }
    }
}

void TuneConfig::validate() const
{
    if (prompt_length < 0) throw PreconditionError("tune config: prompt length must be nonnegative");
    if (iters < 1) throw PreconditionError("tune config: iters must be at least 1");
    if (restarts < 1) throw PreconditionError("tune config: restarts must be at least 1");
    if (!(lr > 0.0)) throw PreconditionError("tune config: lr must be positive");
    if (!(init_scale >= 0.0)) throw PreconditionError("tune config: init_scale must be nonnegative");
    if (!(project_radius > 0.0)) throw PreconditionError("tune config: project_radius must be positive");
}

double TuneResult::max_error() const
{
    double worst = 0.0;
    for (double e : per_pair_error) worst = std::max(worst, e);
    return worst;
}

namespace {

double deviation_norm(const Matrix& r, Norm norm)
{
    if (r.cols() == 1) return vector_norm(r.col(0), norm);
    return matrix_norm(r, norm);
}

// Judged slice of a d x m target: all of it, or the last column.
Matrix judged_target(const MemorizationTask& task, Index pair)
{
    const auto& y = task.pairs[static_cast<std::size_t>(pair)].y;
    return task.last_column_only ? Matrix(y.rightCols(1)) : y;
}

// Forward pass over [P, X] that keeps every intermediate needed for the
// reverse sweep. The last layer only evaluates the query columns whose
// outputs are judged; prompt outputs there are discarded anyway.
class PromptTape {
public:
    PromptTape(const TransformerWeights& w, bool masked) : w_(w), masked_(masked), layers_(w.layers.size()) {}

    const Matrix& forward(const Matrix& prompt, const Matrix& x, Index judged_cols)
    {
        const Index d = w_.d();
        const Index mp = prompt.cols();
        const Index n = mp + x.cols();
        prompt_cols_ = mp;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            auto& c = layers_[l];
            const auto& lw = w_.layers[l];
            if (l == 0) {
                c.xin.resize(d, n);
                if (mp > 0) c.xin.leftCols(mp) = prompt;
                c.xin.rightCols(x.cols()) = x;
            } else {
                c.xin = layers_[l - 1].out;
            }
            c.q0 = (l + 1 == layers_.size()) ? n - judged_cols : 0;
            forward_layer(c, lw);
        }
        return layers_.back().out;
    }

    // Accumulates d(loss)/d(prompt) given d(loss)/d(judged output columns).
    void backward(const Matrix& grad_out, Eigen::Ref<Matrix> grad_prompt)
    {
        const Matrix* g = &grad_out;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            backward_layer(layers_[l], w_.layers[l], *g);
            g = &layers_[l].gx;
        }
        if (prompt_cols_ > 0) grad_prompt += g->leftCols(prompt_cols_);
    }

private:
    struct HeadCache {
        Matrix q, k, v, ov, a;
        Matrix da, ds, dq, dk, dv, dov;
    };
    struct LayerCache {
        Index q0 = 0;
        Matrix xin, z, u, out;
        std::vector<HeadCache> heads;
        Matrix gz, gx, gff;
    };

    void forward_layer(LayerCache& c, const LayerWeights& lw)
    {
        const Index n = c.xin.cols();
        const Index nq = n - c.q0;
        c.heads.resize(lw.heads.size());
        c.z = c.xin.rightCols(nq);
        for (std::size_t k = 0; k < lw.heads.size(); ++k) {
            const auto& hw = lw.heads[k];
            auto& hc = c.heads[k];
            hc.q.noalias() = hw.wq * c.xin.rightCols(nq);
            hc.k.noalias() = hw.wk * c.xin;
            hc.v.noalias() = hw.wv * c.xin;
            hc.ov.noalias() = hw.wo * hc.v;
            hc.a.noalias() = hc.k.transpose() * hc.q;
            for (Index jq = 0; jq < nq; ++jq) {
                const Index visible = masked_ ? c.q0 + jq + 1 : n;
                auto col = hc.a.col(jq);
                const double top = col.head(visible).maxCoeff();
                col.head(visible) = (col.head(visible).array() - top).exp();
                col.head(visible) /= col.head(visible).sum();
                col.tail(n - visible).setZero();
            }
            c.z.noalias() += hc.ov * hc.a;
        }
        c.u.noalias() = lw.w1 * c.z;
        c.u.colwise() += lw.b1;
        c.out.noalias() = lw.w2 * c.u.cwiseMax(0.0);
        c.out.colwise() += lw.b2;
        c.out += c.z;
    }

    void backward_layer(LayerCache& c, const LayerWeights& lw, const Matrix& g)
    {
        const Index n = c.xin.cols();
        const Index nq = n - c.q0;
        c.gff.noalias() = lw.w2.transpose() * g;
        c.gff = (c.u.array() > 0.0).select(c.gff, 0.0);
        c.gz = g;
        c.gz.noalias() += lw.w1.transpose() * c.gff;

        c.gx.setZero(c.xin.rows(), n);
        c.gx.rightCols(nq) = c.gz;
        for (std::size_t k = 0; k < lw.heads.size(); ++k) {
            const auto& hw = lw.heads[k];
            auto& hc = c.heads[k];
            hc.da.noalias() = hc.ov.transpose() * c.gz;
            hc.dov.noalias() = c.gz * hc.a.transpose();
            hc.dv.noalias() = hw.wo.transpose() * hc.dov;
            // Softmax Jacobian, column by column.
            hc.ds.resize(n, nq);
            for (Index jq = 0; jq < nq; ++jq) {
                const double inner = hc.a.col(jq).dot(hc.da.col(jq));
                hc.ds.col(jq) = hc.a.col(jq).cwiseProduct((hc.da.col(jq).array() - inner).matrix());
            }
            hc.dk.noalias() = hc.q * hc.ds.transpose();
            hc.dq.noalias() = hc.k * hc.ds;
            c.gx.noalias() += hw.wv.transpose() * hc.dv;
            c.gx.noalias() += hw.wk.transpose() * hc.dk;
            c.gx.rightCols(nq).noalias() += hw.wq.transpose() * hc.dq;
        }
    }

    const TransformerWeights& w_;
    bool masked_;
    std::vector<LayerCache> layers_;
    Index prompt_cols_ = 0;
};

// Reusable per-restart evaluator: one tape per pair so buffers keep their
// sizes across iterations.
class TaskEvaluator {
public:
    TaskEvaluator(const TransformerWeights& w, const MemorizationTask& task) : w_(w), task_(task)
    {
        tapes_.reserve(task.pairs.size());
        for (std::size_t i = 0; i < task.pairs.size(); ++i) {
            tapes_.emplace_back(w, task.masked);
            targets_.push_back(judged_target(task, static_cast<Index>(i)));
        }
    }

    LossAndGradient evaluate(const Matrix& prompt, bool want_gradient)
    {
        LossAndGradient out;
        out.gradient = Matrix::Zero(w_.d(), prompt.cols());
        out.per_pair_error.resize(task_.pairs.size());
        const double k = static_cast<double>(task_.pairs.size());
        for (std::size_t i = 0; i < task_.pairs.size(); ++i) {
            const Matrix& y = targets_[i];
            const Matrix& o = tapes_[i].forward(prompt, task_.pairs[i].x, y.cols());
            residual_ = o - y;
            out.loss += residual_.squaredNorm();
            out.per_pair_error[i] = deviation_norm(residual_, task_.norm);
            if (want_gradient && prompt.cols() > 0) {
                residual_ *= 2.0 / k;
                tapes_[i].backward(residual_, out.gradient);
            }
        }
        out.loss /= k;
        return out;
    }

private:
    const TransformerWeights& w_;
    const MemorizationTask& task_;
    std::vector<PromptTape> tapes_;
    std::vector<Matrix> targets_;
    Matrix residual_;
};

void check_prompt(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task)
{
    if (task.pairs.empty()) throw PreconditionError("memorization task has no pairs (k = 0)");
    if (prompt.cols() > 0 && prompt.rows() != w.d())
        throw ShapeError("prompt has embedding dimension " + std::to_string(prompt.rows()) + ", expected " +
                         std::to_string(w.d()));
    for (const auto& p : task.pairs) {
        if (p.x.rows() != w.d() || p.y.rows() != w.d()) throw ShapeError("task dimension differs from the model");
        if (p.x.cols() != p.y.cols()) throw ShapeError("task input and target token counts differ");
    }
}

struct RestartOutcome {
    Matrix best_prompt;
    double best_max_error = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
    bool aborted = false;
    std::optional<int> iters_to_success;
};

RestartOutcome run_restart(const TransformerWeights& w, const MemorizationTask& task, const TuneConfig& cfg,
                           int restart)
{
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double stabilizer = 1e-8;

    Rng rng(cfg.seed + static_cast<std::uint64_t>(restart));
    Matrix prompt = cfg.init_scale * sample_normal(w.d(), cfg.prompt_length, rng);
    for (Index j = 0; j < prompt.cols(); ++j) project_to_ball(prompt.col(j), cfg.project_radius, task.norm);

    Matrix first = Matrix::Zero(prompt.rows(), prompt.cols());
    Matrix second = Matrix::Zero(prompt.rows(), prompt.cols());
    TaskEvaluator eval(w, task);
    RestartOutcome out;
    out.trace.reserve(static_cast<std::size_t>(cfg.iters) + 1);

    double decay1 = 1.0;
    double decay2 = 1.0;
    for (int step = 0;; ++step) {
        auto lg = eval.evaluate(prompt, step < cfg.iters);
        out.trace.push_back(lg.loss);
        if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
            out.aborted = true;
            return out;
        }
        const double worst = *std::max_element(lg.per_pair_error.begin(), lg.per_pair_error.end());
        if (worst < out.best_max_error) {
            out.best_max_error = worst;
            out.best_prompt = prompt;
        }
        if (worst <= task.eps && !out.iters_to_success) {
            out.iters_to_success = step;
            if (cfg.stop_on_success) break;
        }
        if (step == cfg.iters) break;

        decay1 *= beta1;
        decay2 *= beta2;
        first = beta1 * first + (1.0 - beta1) * lg.gradient;
        second = beta2 * second + (1.0 - beta2) * lg.gradient.cwiseAbs2();
        const double c1 = 1.0 / (1.0 - decay1);
        const double c2 = 1.0 / (1.0 - decay2);
        prompt.array() -= cfg.lr * (first.array() * c1) / ((second.array() * c2).sqrt() + stabilizer);
        for (Index j = 0; j < prompt.cols(); ++j) project_to_ball(prompt.col(j), cfg.project_radius, task.norm);
    }
    return out;
}

} // namespace

double pair_error(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task, Index pair)
{
    if (pair < 0 || pair >= task.size()) throw PreconditionError("pair index out of range");
    const auto& p = task.pairs[static_cast<std::size_t>(pair)];
    const TokenMatrix out = forward_with_prompt(w, prompt, p.x, task.masked);
    if (task.last_column_only) return vector_norm(out.rightCols(1) - p.y.rightCols(1), task.norm);
    return deviation_norm(out - p.y, task.norm);
}

double memorization_loss(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task)
{
    check_prompt(w, prompt, task);
    double total = 0.0;
    for (const auto& p : task.pairs) {
        const TokenMatrix out = forward_with_prompt(w, prompt, p.x, task.masked);
        total += task.last_column_only ? (out.rightCols(1) - p.y.rightCols(1)).squaredNorm()
                                       : (out - p.y).squaredNorm();
    }
    return total / static_cast<double>(task.pairs.size());
}

LossAndGradient loss_and_grad(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task)
{
    check_prompt(w, prompt, task);
    TaskEvaluator eval(w, task);
    return eval.evaluate(prompt, true);
}

TokenMatrix grad_prompt(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task)
{
    if (prompt.cols() == 0) throw PreconditionError("grad_prompt: prompt is empty (m_p = 0)");
    return loss_and_grad(w, prompt, task).gradient;
}

TuneResult tune_prompt(const TransformerWeights& w, const MemorizationTask& task, const TuneConfig& cfg)
{
    cfg.validate();
    if (task.pairs.empty()) throw PreconditionError("tune_prompt: task has no pairs (k = 0)");
    task.validate(w.d());

    TuneResult result;
    if (cfg.prompt_length == 0) {
        result.best_prompt = TokenMatrix(w.d(), 0);
        result.loss_trace.push_back(memorization_loss(w, result.best_prompt, task));
    } else {
        std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.restarts));
        parallel_for(outcomes.size(), cfg.threads,
                     [&](std::size_t r) { outcomes[r] = run_restart(w, task, cfg, static_cast<int>(r)); });

        const RestartOutcome* winner = nullptr;
        for (const auto& o : outcomes) {
            if (o.aborted) {
                ++result.aborted_restarts;
                if (o.best_prompt.size() == 0) continue;
            } else {
                ++result.restarts_used;
            }
            if (!winner || o.best_max_error < winner->best_max_error) winner = &o;
        }
        if (winner) {
            result.best_prompt = winner->best_prompt;
            result.loss_trace = winner->trace;
            result.iters_to_success = winner->iters_to_success;
        } else {
            // Every restart diverged before producing a finite iterate.
            result.best_prompt = TokenMatrix::Zero(w.d(), cfg.prompt_length);
            result.loss_trace.push_back(memorization_loss(w, result.best_prompt, task));
        }
    }

    for (Index i = 0; i < task.size(); ++i) {
        const double e = pair_error(w, result.best_prompt, task, i);
        result.per_pair_error.push_back(e);
        result.success.push_back(e <= task.eps);
    }
    return result;
}

bool is_accessible(const TuneResult& result, double eps)
{
    return std::all_of(result.per_pair_error.begin(), result.per_pair_error.end(),
                       [eps](double e) { return e <= eps; });
}

} // namespace plab
