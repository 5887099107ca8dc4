// SPDX-License-Identifier: Apache-2.0
#include "actionspotter/model.hpp"

#include "actionspotter/errors.hpp"
#include "bytes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace actionspotter {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace detail;

int ModelConfig::head_outputs(Head h) const {
    switch (h) {
    case Head::Spot:
        return 2;
    case Head::Class:
        return num_classes + 1;
    case Head::Browse:
        return num_actions;
    case Head::Critic:
        return 1;
    }
    return 0;
}

void ModelConfig::validate() const {
    if (input_dim < 1 || hidden < 1 || num_classes < 1 || num_actions < 1)
        throw ConfigError("model config: input_dim, hidden, num_classes and num_actions must be >= 1");
}

ParamLayout::ParamLayout(const ModelConfig &cfg) {
    cfg.validate();
    const Index H = cfg.hidden;
    const Index in = cfg.head_input();
    auto add = [this](Index rows, Index cols) {
        Tensor t{total, rows, cols};
        total += rows * cols;
        return t;
    };
    if (cfg.use_memory) {
        gru_W = add(3 * H, cfg.input_dim);
        gru_U = add(3 * H, H);
        gru_b = add(3 * H, 1);
    }
    head_W1 = add(kNumHeads * H, in);
    head_b1 = add(kNumHeads * H, 1);
    for (int k = 0; k < kNumHeads; ++k) {
        const Index out = cfg.head_outputs(static_cast<Head>(k));
        W2[k] = add(H, H);
        b2[k] = add(H, 1);
        W3[k] = add(out, H);
        b3[k] = add(out, 1);
    }
}

Model::Model(ModelConfig cfg) : cfg_(cfg), layout_(cfg_), params_(VectorXd::Zero(layout_.total)) {}

void Model::init(Rng &rng) {
    params_.setZero();
    auto fill = [&](const Tensor &t, Index fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        auto m = view(params_, t);
        for (Index c = 0; c < m.cols(); ++c)
            for (Index r = 0; r < m.rows(); ++r)
                m(r, c) = bound * (2.0 * uniform01(rng) - 1.0);
    };
    if (cfg_.use_memory) {
        fill(layout_.gru_W, cfg_.input_dim);
        fill(layout_.gru_U, cfg_.hidden);
    }
    fill(layout_.head_W1, cfg_.head_input());
    for (int k = 0; k < kNumHeads; ++k) {
        fill(layout_.W2[k], cfg_.hidden);
        fill(layout_.W3[k], cfg_.hidden);
    }
}

namespace {

template <class M> auto sigmoid(const M &x) { return (1.0 + (-x.array()).exp()).inverse(); }

void require(bool ok, const std::string &msg) {
    if (!ok)
        throw ContractViolation(msg);
}

} // namespace

GruStep gru_forward(const Model &model, const VectorXd &f, const VectorXd &h_prev) {
    const auto &cfg = model.config();
    require(cfg.use_memory, "gru_forward on a model without memory");
    require(f.size() == cfg.input_dim && h_prev.size() == cfg.hidden, "gru_forward: shape mismatch");
    const Index H = cfg.hidden;
    const auto &L = model.layout();
    const auto W = view(model.params(), L.gru_W);
    const auto U = view(model.params(), L.gru_U);
    const auto b = view(model.params(), L.gru_b);
    const VectorXd gates = W * f + b;
    GruStep out;
    out.z = sigmoid((gates.head(H) + U.topRows(H) * h_prev).eval()).matrix();
    out.r = sigmoid((gates.segment(H, H) + U.middleRows(H, H) * h_prev).eval()).matrix();
    const VectorXd rh = out.r.cwiseProduct(h_prev);
    out.candidate = (gates.tail(H) + U.bottomRows(H) * rh).array().tanh().matrix();
    out.h = h_prev + out.z.cwiseProduct(out.candidate - h_prev);
    return out;
}

VectorXd head_forward(const Model &model, Head head, const VectorXd &input) {
    const auto &cfg = model.config();
    require(input.size() == cfg.head_input(), "head_forward: shape mismatch");
    const int k = static_cast<int>(head);
    const Index H = cfg.hidden;
    const auto &L = model.layout();
    const auto &p = model.params();
    const VectorXd a1 = (view(p, L.head_W1).middleRows(k * H, H) * input + view(p, L.head_b1).middleRows(k * H, H))
                            .cwiseMax(0.0);
    const VectorXd a2 = (view(p, L.W2[k]) * a1 + view(p, L.b2[k])).cwiseMax(0.0);
    return view(p, L.W3[k]) * a2 + view(p, L.b3[k]);
}

void EpisodeCache::reset(const ModelConfig &cfg, int capacity) {
    steps = 0;
    const Index H = cfg.hidden;
    auto fit = [capacity](MatrixXd &m, Index rows) {
        if (m.rows() != rows || m.cols() < capacity)
            m.resize(rows, capacity);
    };
    fit(F, cfg.input_dim);
    if (cfg.use_memory) {
        for (auto *m : {&Hprev, &Z, &R, &C, &RH, &Hout})
            fit(*m, H);
    }
    fit(A1, kNumHeads * H);
    for (int k = 0; k < kNumHeads; ++k) {
        fit(A2[k], H);
        fit(Out[k], cfg.head_outputs(static_cast<Head>(k)));
    }
}

void forward_step(const Model &model, EpisodeCache &cache, const Eigen::Ref<const VectorXd> &f) {
    const auto &cfg = model.config();
    const auto &L = model.layout();
    const auto &p = model.params();
    const Index H = cfg.hidden;
    const int n = cache.steps;
    require(n < cache.F.cols(), "forward_step: episode cache is full");
    require(f.size() == cfg.input_dim, "forward_step: feature has wrong dimension");
    cache.F.col(n) = f;

    if (cfg.use_memory) {
        const auto W = view(p, L.gru_W);
        const auto U = view(p, L.gru_U);
        const auto b = view(p, L.gru_b);
        if (n == 0)
            cache.Hprev.col(0).setZero();
        else
            cache.Hprev.col(n) = cache.Hout.col(n - 1);
        const auto hp = cache.Hprev.col(n);
        VectorXd gates = W * f + b;
        gates.head(2 * H).noalias() += U.topRows(2 * H) * hp;
        cache.Z.col(n) = sigmoid(gates.head(H)).matrix();
        cache.R.col(n) = sigmoid(gates.segment(H, H)).matrix();
        cache.RH.col(n) = cache.R.col(n).cwiseProduct(hp);
        gates.tail(H).noalias() += U.bottomRows(H) * cache.RH.col(n);
        cache.C.col(n) = gates.tail(H).array().tanh().matrix();
        cache.Hout.col(n) = hp + cache.Z.col(n).cwiseProduct(cache.C.col(n) - hp);
    }

    const VectorXd u = cfg.use_memory ? VectorXd(cache.Hout.col(n)) : VectorXd(f);
    cache.A1.col(n) = (view(p, L.head_W1) * u + view(p, L.head_b1)).cwiseMax(0.0);
    for (int k = 0; k < kNumHeads; ++k) {
        cache.A2[k].col(n) = (view(p, L.W2[k]) * cache.A1.col(n).segment(k * H, H) + view(p, L.b2[k])).cwiseMax(0.0);
        cache.Out[k].col(n) = view(p, L.W3[k]) * cache.A2[k].col(n) + view(p, L.b3[k]);
    }
    cache.steps = n + 1;
}

OutputGrads::OutputGrads(const ModelConfig &cfg, int steps) {
    for (int k = 0; k < kNumHeads; ++k)
        d[k] = MatrixXd::Zero(cfg.head_outputs(static_cast<Head>(k)), steps);
}

void backward(const Model &model, const EpisodeCache &cache, const OutputGrads &dout, VectorXd &grad,
              int bptt_window) {
    const auto &cfg = model.config();
    const auto &L = model.layout();
    const auto &p = model.params();
    const Index H = cfg.hidden;
    const Index N = cache.steps;
    require(grad.size() == L.total, "backward: gradient vector has wrong size");
    if (N == 0)
        return;
    for (int k = 0; k < kNumHeads; ++k)
        require(dout.d[k].size() == 0 || (dout.d[k].cols() == N &&
                                          dout.d[k].rows() == cfg.head_outputs(static_cast<Head>(k))),
                "backward: output gradient shape does not match the cached episode");

    const auto U_in = cfg.use_memory ? cache.Hout.leftCols(N) : cache.F.leftCols(N);
    const auto A1 = cache.A1.leftCols(N);
    MatrixXd dA1 = MatrixXd::Zero(kNumHeads * H, N);
    for (int k = 0; k < kNumHeads; ++k) {
        if (dout.d[k].size() == 0)
            continue;
        const auto &dO = dout.d[k];
        const auto A2 = cache.A2[k].leftCols(N);
        view(grad, L.W3[k]).noalias() += dO * A2.transpose();
        view(grad, L.b3[k]) += dO.rowwise().sum();
        const MatrixXd dA2 = (view(p, L.W3[k]).transpose() * dO).cwiseProduct((A2.array() > 0.0).cast<double>().matrix());
        view(grad, L.W2[k]).noalias() += dA2 * A1.middleRows(k * H, H).transpose();
        view(grad, L.b2[k]) += dA2.rowwise().sum();
        dA1.middleRows(k * H, H) = (view(p, L.W2[k]).transpose() * dA2)
                                       .cwiseProduct((A1.middleRows(k * H, H).array() > 0.0).cast<double>().matrix());
    }
    view(grad, L.head_W1).noalias() += dA1 * U_in.transpose();
    view(grad, L.head_b1) += dA1.rowwise().sum();
    if (!cfg.use_memory)
        return;

    const MatrixXd dHead = view(p, L.head_W1).transpose() * dA1;
    const auto U = view(p, L.gru_U);
    MatrixXd dGates(3 * H, N);
    VectorXd dh_next = VectorXd::Zero(H);
    VectorXd dh(H), dhp(H), dz(H), dc(H), drh(H);
    for (Index n = N - 1; n >= 0; --n) {
        dh = dHead.col(n) + dh_next;
        const auto z = cache.Z.col(n).array();
        const auto r = cache.R.col(n).array();
        const auto c = cache.C.col(n).array();
        const auto hp = cache.Hprev.col(n).array();
        auto daz = dGates.col(n).head(H);
        auto dar = dGates.col(n).segment(H, H);
        auto dac = dGates.col(n).tail(H);
        dac = (dh.array() * z * (1.0 - c * c)).matrix();
        daz = (dh.array() * (c - hp) * z * (1.0 - z)).matrix();
        drh.noalias() = U.bottomRows(H).transpose() * dac;
        dar = (drh.array() * hp * r * (1.0 - r)).matrix();
        dhp = (dh.array() * (1.0 - z) + drh.array() * r).matrix();
        dhp.noalias() += U.topRows(2 * H).transpose() * dGates.col(n).head(2 * H);
        dh_next = dhp;
        if (bptt_window > 0 && n % bptt_window == 0)
            dh_next.setZero();
    }
    view(grad, L.gru_W).noalias() += dGates * cache.F.leftCols(N).transpose();
    view(grad, L.gru_b) += dGates.rowwise().sum();
    auto gU = view(grad, L.gru_U);
    gU.topRows(2 * H).noalias() += dGates.topRows(2 * H) * cache.Hprev.leftCols(N).transpose();
    gU.bottomRows(H).noalias() += dGates.bottomRows(H) * cache.RH.leftCols(N).transpose();
}

VectorXd softmax(const VectorXd &logits) {
    const VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

Categorical categorical(const VectorXd &logits, Rng *rng) {
    if (logits.size() == 0 || !logits.allFinite())
        throw ContractViolation("categorical: logits must be finite and non-empty");
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    Categorical out;
    out.probs = (logits.array() - lse).exp().matrix();
    out.entropy = 0.0;
    for (Index i = 0; i < logits.size(); ++i)
        out.entropy += out.probs[i] * (lse - logits[i]);
    if (rng) {
        const double u = uniform01(*rng);
        double cum = 0.0;
        out.index = static_cast<int>(logits.size()) - 1;
        for (Index i = 0; i < logits.size(); ++i) {
            cum += out.probs[i];
            if (u < cum) {
                out.index = static_cast<int>(i);
                break;
            }
        }
    } else {
        Index best;
        logits.maxCoeff(&best);
        out.index = static_cast<int>(best);
    }
    out.log_prob = logits[out.index] - lse;
    return out;
}

FdReport fd_check(const VectorXd &params, const std::function<double(const VectorXd &)> &loss,
                  const VectorXd &analytic, Rng &rng, Index min_coords, double h) {
    require(analytic.size() == params.size(), "fd_check: gradient size mismatch");
    std::vector<Index> coords(static_cast<std::size_t>(params.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (params.size() > min_coords) {
        shuffle(coords.begin(), coords.end(), rng);
        coords.resize(static_cast<std::size_t>(min_coords));
    }
    FdReport rep;
    VectorXd x = params;
    for (Index i : coords) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = loss(x);
        x[i] = orig - h;
        const double down = loss(x);
        x[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rep.worst_index < 0 || err > rep.max_rel_error) {
            rep.max_rel_error = err;
            rep.worst_index = i;
        }
        ++rep.checked;
    }
    return rep;
}

OptState make_opt_state(Index size, double lr) {
    OptState s;
    s.lr = lr;
    s.m = VectorXd::Zero(size);
    s.v = VectorXd::Zero(size);
    return s;
}

void adam_step(VectorXd &params, const VectorXd &grad, OptState &opt) {
    require(grad.size() == params.size() && opt.m.size() == params.size() && opt.v.size() == params.size(),
            "adam_step: shape mismatch");
    ++opt.step;
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad;
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    params.array() -= opt.lr * (opt.m.array() / c1) / ((opt.v.array() / c2).sqrt() + opt.eps);
}

namespace {

constexpr char kCkptMagic[4] = {'A', 'S', 'C', 'K'};

void put_vec(std::vector<std::uint8_t> &out, const VectorXd &v) {
    put_u64(out, static_cast<std::uint64_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i)
        put_f64(out, v[i]);
}

} // namespace

// Layout: magic, u16 version, u32 D, u32 H, u32 C, u32 A, u8 use_memory, u32 count + u32
// displacements, u32 length + hyperparameter JSON, params vector, u64 step, f64 lr/beta1/beta2/eps,
// m vector, v vector. Vectors are u64 length + f64 values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
    std::vector<std::uint8_t> out(kCkptMagic, kCkptMagic + 4);
    put_u16(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.input_dim));
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.hidden));
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.num_classes));
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.num_actions));
    out.push_back(ckpt.model.use_memory ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(ckpt.actions.displacements.size()));
    for (int d : ckpt.actions.displacements)
        put_u32(out, static_cast<std::uint32_t>(d));
    put_u32(out, static_cast<std::uint32_t>(ckpt.hyper_json.size()));
    out.insert(out.end(), ckpt.hyper_json.begin(), ckpt.hyper_json.end());
    put_vec(out, ckpt.params);
    put_u64(out, static_cast<std::uint64_t>(ckpt.opt.step));
    put_f64(out, ckpt.opt.lr);
    put_f64(out, ckpt.opt.beta1);
    put_f64(out, ckpt.opt.beta2);
    put_f64(out, ckpt.opt.eps);
    put_vec(out, ckpt.opt.m);
    put_vec(out, ckpt.opt.v);
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t> &bytes) {
    ByteReader in(bytes);
    auto need = [&](std::size_t n) {
        if (!in.has(n))
            throw CheckpointError("checkpoint truncated");
    };
    auto u32 = [&] {
        need(4);
        return get_u32(in.take(4));
    };
    auto u64 = [&] {
        need(8);
        return get_u64(in.take(8));
    };
    auto f64 = [&] {
        need(8);
        return get_f64(in.take(8));
    };
    auto vec = [&] {
        const auto n = u64();
        if (n > in.remaining() / 8)
            throw CheckpointError("checkpoint truncated");
        VectorXd v(static_cast<Index>(n));
        for (Index i = 0; i < v.size(); ++i)
            v[i] = f64();
        return v;
    };

    need(6);
    const auto *head = in.take(4);
    if (!std::equal(head, head + 4, kCkptMagic))
        throw CheckpointError("not a checkpoint file (bad magic)");
    if (const auto version = get_u16(in.take(2)); version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.model.input_dim = static_cast<int>(u32());
    ck.model.hidden = static_cast<int>(u32());
    ck.model.num_classes = static_cast<int>(u32());
    ck.model.num_actions = static_cast<int>(u32());
    need(1);
    ck.model.use_memory = *in.take(1) != 0;
    const auto na = u32();
    if (na > in.remaining() / 4)
        throw CheckpointError("checkpoint truncated");
    ck.actions.displacements.clear();
    for (std::uint32_t i = 0; i < na; ++i)
        ck.actions.displacements.push_back(static_cast<int>(u32()));
    const auto len = u32();
    need(len);
    const auto *text = in.take(len);
    ck.hyper_json.assign(reinterpret_cast<const char *>(text), len);
    ck.params = vec();
    ck.opt.step = static_cast<std::int64_t>(u64());
    ck.opt.lr = f64();
    ck.opt.beta1 = f64();
    ck.opt.beta2 = f64();
    ck.opt.eps = f64();
    ck.opt.m = vec();
    ck.opt.v = vec();
    if (in.remaining() != 0)
        throw CheckpointError("checkpoint has trailing bytes");

    try {
        ck.model.validate();
        ck.actions.validate();
    } catch (const ConfigError &e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    if (ck.model.num_actions != ck.actions.size())
        throw CheckpointError("checkpoint: action count does not match the action set");
    if (ck.params.size() != ParamLayout(ck.model).total)
        throw CheckpointError("checkpoint: parameter count does not match the model header");
    if (ck.opt.m.size() != ck.params.size() || ck.opt.v.size() != ck.params.size())
        throw CheckpointError("checkpoint: optimizer state does not match the parameters");
    return ck;
}

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
    const auto bytes = encode_checkpoint(ckpt);
    spit(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::string text;
    try {
        text = slurp(path);
    } catch (const LoadError &e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(std::vector<std::uint8_t>(text.begin(), text.end()));
}

ModelPolicy::ModelPolicy(const Model &model, BrowseActionSet actions, int fixed_stride)
    : model_(model), actions_(std::move(actions)), fixed_stride_(fixed_stride) {
    if (fixed_stride_ > 0)
        actions_ = BrowseActionSet{{fixed_stride_}};
    else if (actions_.size() != model_.config().num_actions)
        throw ContractViolation("policy: action set size does not match the browser head");
}

void ModelPolicy::begin(const FeatureSequence &features, const VideoAnnotation *) {
    if (features.dim() != model_.config().input_dim)
        throw ContractViolation("policy: feature dimension " + std::to_string(features.dim()) +
                                " does not match the model (" + std::to_string(model_.config().input_dim) + ")");
    features_ = &features;
    cache_.reset(model_.config(), features.frames());
}

namespace {

double log_softmax_at(const VectorXd &logits, Index i) {
    const double mx = logits.maxCoeff();
    return logits[i] - mx - std::log((logits.array() - mx).exp().sum());
}

} // namespace

Decision ModelPolicy::decide(int row, Rng *rng) {
    forward_step(model_, cache_, features_->data.row(row).transpose());
    const int n = cache_.steps - 1;
    const int C = model_.config().num_classes;
    const StepRecord *forced = nullptr;
    if (replay_) {
        if (n >= static_cast<int>(replay_->steps.size()) || replay_->steps[n].row != row)
            throw ContractViolation("policy replay diverged from the recorded episode at step " + std::to_string(n));
        forced = &replay_->steps[n];
    }
    Decision d;
    if (fixed_stride_ == 0) {
        const auto brow = categorical(cache_.output(Head::Browse, n), forced ? nullptr : rng);
        d.browse_index = forced ? forced->browse_index : brow.index;
        d.browse_log_prob = forced ? log_softmax_at(cache_.output(Head::Browse, n), d.browse_index) : brow.log_prob;
        d.browse_entropy = brow.entropy;
        d.browse_probs.assign(brow.probs.data(), brow.probs.data() + brow.probs.size());
    }
    const auto sf = categorical(cache_.output(Head::Spot, n), forced ? nullptr : rng);
    d.keep = forced ? forced->keep : sf.index == 1;
    d.keep_log_prob = forced ? log_softmax_at(cache_.output(Head::Spot, n), d.keep ? 1 : 0) : sf.log_prob;
    d.keep_entropy = sf.entropy;
    d.likelihood = sf.probs[1];
    const VectorXd p = softmax(cache_.output(Head::Class, n));
    d.class_probs.assign(p.data(), p.data() + p.size());
    Index label;
    p.head(C).maxCoeff(&label);
    d.label = static_cast<int>(label);
    d.value = cache_.Out[static_cast<int>(Head::Critic)](0, n);
    d.memory = model_.config().use_memory ? VectorXd(cache_.Hout.col(n)) : VectorXd(cache_.F.col(n));
    return d;
}

} // namespace actionspotter
