#include "lightmover/toy_dit.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "lightmover/errors.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

void ToyDitConfig::validate() const {
    if (latent_dim <= 0 || model_dim <= 0 || heads <= 0 || blocks < 0 || mlp_ratio <= 0 || time_embed_dim <= 0) {
        throw ConfigError("model: dimensions must be positive");
    }
    if (model_dim % heads != 0) throw ConfigError("model: model_dim must be divisible by heads");
    if (head_dim() % 2 != 0) throw ConfigError("model: head dimension must be even");
    if (time_embed_dim % 2 != 0) throw ConfigError("model: time_embed_dim must be even");
    if (mspe.head_dim != head_dim()) throw ConfigError("model: mspe.head_dim must equal model_dim / heads");
    mspe.validate();
}

std::size_t ParamLayout::add(std::string name, int rows, int cols) {
    slots.push_back({std::move(name), total, rows, cols});
    total += slots.back().size();
    return slots.size() - 1;
}

const ParamSlot& ParamLayout::find(const std::string& name) const {
    for (const auto& s : slots) {
        if (s.name == name) return s;
    }
    throw IndexError("no parameter named " + name);
}

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> time_embedding(double t, int dim) {
    Eigen::Matrix<T, 1, Eigen::Dynamic> e(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        const double arg = 1000.0 * t * freq;
        e(i) = static_cast<T>(std::cos(arg));
        e(i + half) = static_cast<T>(std::sin(arg));
    }
    return e;
}

template Eigen::Matrix<float, 1, Eigen::Dynamic> time_embedding<float>(double, int);
template Eigen::Matrix<double, 1, Eigen::Dynamic> time_embedding<double>(double, int);

namespace {

constexpr double kLayerNormEps = 1e-6;

template <typename Mat, typename RowVec>
void layer_norm(const Mat& x, Mat& out, RowVec& rstd) {
    using T = typename Mat::Scalar;
    const auto n = x.rows();
    const auto d = x.cols();
    out.resize(n, d);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mu = x.row(i).mean();
        const auto centered = (x.row(i).array() - mu);
        const T var = centered.square().mean();
        const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        rstd(i) = r;
        out.row(i) = centered * r;
    }
}

// dx = rstd * (dn - mean(dn) - n * mean(dn * n)) for each row.
template <typename Mat, typename RowVec>
void layer_norm_backward(const Mat& dn, const Mat& norm, const RowVec& rstd, Mat& dx_accum) {
    for (Eigen::Index i = 0; i < dn.rows(); ++i) {
        const auto m1 = dn.row(i).mean();
        const auto m2 = (dn.row(i).array() * norm.row(i).array()).mean();
        dx_accum.row(i).array() += rstd(i) * (dn.row(i).array() - m1 - norm.row(i).array() * m2);
    }
}

template <typename T>
T gelu(T z) {
    constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    return T(0.5) * z * (T(1) + std::tanh(k * (z + T(0.044715) * z * z * z)));
}

template <typename T>
T gelu_grad(T z) {
    constexpr T k = static_cast<T>(0.7978845608028654);
    const T u = std::tanh(k * (z + T(0.044715) * z * z * z));
    return T(0.5) * (T(1) + u) + T(0.5) * z * (T(1) - u * u) * k * (T(1) + T(3 * 0.044715) * z * z);
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

struct RotaryTable {
    // n x (head_dim / 2), one entry per rotation pair.
    Eigen::MatrixXd cos;
    Eigen::MatrixXd sin;
};

RotaryTable build_rotary(const std::vector<PositionTag>& tags, const MspeConfig& cfg, const RotaryFrequencies& f) {
    const auto n = static_cast<Eigen::Index>(tags.size());
    const int pairs = cfg.head_dim / 2;
    RotaryTable table{Eigen::MatrixXd(n, pairs), Eigen::MatrixXd(n, pairs)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tag = tags[static_cast<std::size_t>(i)];
        int k = 0;
        for (double th : f.w) {
            table.cos(i, k) = std::cos(tag.w * th);
            table.sin(i, k++) = std::sin(tag.w * th);
        }
        for (double th : f.h) {
            table.cos(i, k) = std::cos(tag.h * th);
            table.sin(i, k++) = std::sin(tag.h * th);
        }
        for (double th : f.t) {
            table.cos(i, k) = std::cos(tag.t * th);
            table.sin(i, k++) = std::sin(tag.t * th);
        }
    }
    return table;
}

template <typename Block>
void rotate_rows(Block&& rows, const RotaryTable& table, bool inverse) {
    using T = typename std::decay_t<Block>::Scalar;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        for (Eigen::Index k = 0; k < table.cos.cols(); ++k) {
            const T c = static_cast<T>(table.cos(i, k));
            const T s = inverse ? static_cast<T>(-table.sin(i, k)) : static_cast<T>(table.sin(i, k));
            const T a = rows(i, 2 * k);
            const T b = rows(i, 2 * k + 1);
            rows(i, 2 * k) = a * c - b * s;
            rows(i, 2 * k + 1) = a * s + b * c;
        }
    }
}

}  // namespace

template <typename T>
ToyDiT<T>::ToyDiT(const ToyDitConfig& config, std::uint64_t seed, InitScheme init) : config_(config) {
    config_.validate();
    build_layout();
    params_.assign(layout_.total, T(0));
    Rng rng(derive_seed({seed, 0xD17ull}));
    auto fill_normal = [&](std::size_t idx, double stddev) {
        const auto& s = layout_.slots[idx];
        std::normal_distribution<double> dist(0.0, stddev);
        for (std::size_t i = 0; i < s.size(); ++i) params_[s.offset + i] = static_cast<T>(dist(rng));
    };
    auto xavier = [&](std::size_t idx) {
        const auto& s = layout_.slots[idx];
        fill_normal(idx, std::sqrt(2.0 / (s.rows + s.cols)));
    };
    const bool all = init == InitScheme::all_random;
    xavier(slots_.in_w);
    if (all) fill_normal(slots_.in_b, 0.1);
    fill_normal(slots_.time_w, 0.02 * (all ? 10.0 : 1.0));
    if (all) fill_normal(slots_.time_b, 0.1);
    for (const auto& b : slots_.blocks) {
        for (auto idx : {b.wq, b.wk, b.wv, b.wo, b.w1, b.w2}) xavier(idx);
        fill_normal(b.cond, 0.02);
        fill_normal(b.role, 0.02);
        if (all) {
            fill_normal(b.mod_w, 0.1);
            fill_normal(b.mod_b, 0.3);
            for (auto idx : {b.bo, b.b1, b.b2}) fill_normal(idx, 0.1);
        }
    }
    if (all) {
        fill_normal(slots_.final_mod_w, 0.1);
        fill_normal(slots_.final_mod_b, 0.3);
        xavier(slots_.out_w);
        fill_normal(slots_.out_b, 0.1);
    }
}

template <typename T>
void ToyDiT<T>::build_layout() {
    const int D = config_.model_dim;
    const int L = config_.latent_dim;
    const int E = config_.time_embed_dim;
    const int dh = config_.head_dim();
    const int hidden = D * config_.mlp_ratio;
    layout_ = {};
    slots_ = {};
    slots_.in_w = layout_.add("in.w", L, D);
    slots_.in_b = layout_.add("in.b", 1, D);
    slots_.time_w = layout_.add("time.w", E, D);
    slots_.time_b = layout_.add("time.b", 1, D);
    for (int l = 0; l < config_.blocks; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        DitSlots::Block b{};
        b.mod_w = layout_.add(p + "mod.w", D, 6 * D);
        b.mod_b = layout_.add(p + "mod.b", 1, 6 * D);
        b.wq = layout_.add(p + "attn.q", D, D);
        b.wk = layout_.add(p + "attn.k", D, D);
        b.wv = layout_.add(p + "attn.v", D, D);
        b.wo = layout_.add(p + "attn.o", D, D);
        b.bo = layout_.add(p + "attn.o.b", 1, D);
        b.cond = layout_.add(p + "mspe.condition", kConditionTypeCount, dh);
        b.role = layout_.add(p + "mspe.role", kRoleCount, dh);
        b.w1 = layout_.add(p + "mlp.w1", D, hidden);
        b.b1 = layout_.add(p + "mlp.b1", 1, hidden);
        b.w2 = layout_.add(p + "mlp.w2", hidden, D);
        b.b2 = layout_.add(p + "mlp.b2", 1, D);
        slots_.blocks.push_back(b);
    }
    slots_.final_mod_w = layout_.add("final.mod.w", D, 2 * D);
    slots_.final_mod_b = layout_.add("final.mod.b", 1, 2 * D);
    slots_.out_w = layout_.add("out.w", D, L);
    slots_.out_b = layout_.add("out.b", 1, L);
}

template <typename T>
typename ToyDiT<T>::MapMat ToyDiT<T>::slot(std::vector<T>& buf, std::size_t idx) const {
    const auto& s = layout_.slots[idx];
    return MapMat(buf.data() + s.offset, s.rows, s.cols);
}

template <typename T>
typename ToyDiT<T>::ConstMapMat ToyDiT<T>::slot(const std::vector<T>& buf, std::size_t idx) const {
    const auto& s = layout_.slots[idx];
    return ConstMapMat(buf.data() + s.offset, s.rows, s.cols);
}

template <typename T>
typename ToyDiT<T>::Mat ToyDiT<T>::forward(const TokenSequence& seq, double t, Cache* cache) const {
    const auto& out_block = seq.output_block();
    if (seq.tokens.cols() != config_.latent_dim) throw ShapeError("ToyDiT: token width does not match latent_dim");
    if (seq.tokens.rows() != seq.size()) throw ShapeError("ToyDiT: token rows do not match tags");

    Cache local;
    Cache& c = cache ? *cache : local;
    const int D = config_.model_dim;
    const int dh = config_.head_dim();
    const auto n = static_cast<Eigen::Index>(seq.size());
    const T attn_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    c.x = seq.tokens.template cast<T>();
    c.tags = seq.tags;
    c.out_start = out_block.start;
    c.out_count = out_block.count;
    c.freqs = rotary_frequencies(config_.mspe, seq.full_grid_w, seq.full_grid_h, kConditionTypeCount);
    const RotaryTable rot = build_rotary(seq.tags, config_.mspe, c.freqs);

    c.temb = time_embedding<T>(t, config_.time_embed_dim);
    if (config_.time_conditioning) {
        c.time_pre = c.temb * slot(params_, slots_.time_w) + slot(params_, slots_.time_b);
        c.cond = c.time_pre.unaryExpr([](T v) { return v * sigmoid(v); });
    } else {
        c.time_pre = RowVec::Zero(D);
        c.cond = RowVec::Zero(D);
    }

    Mat h = c.x * slot(params_, slots_.in_w);
    h.rowwise() += RowVec(slot(params_, slots_.in_b));

    c.blocks.resize(slots_.blocks.size());
    for (std::size_t l = 0; l < slots_.blocks.size(); ++l) {
        const auto& s = slots_.blocks[l];
        auto& bc = c.blocks[l];
        bc.h_in = h;
        bc.mod = c.cond * slot(params_, s.mod_w) + slot(params_, s.mod_b);
        const auto shift1 = bc.mod.segment(0, D);
        const auto scale1 = bc.mod.segment(D, D);
        const auto gate1 = bc.mod.segment(2 * D, D);
        const auto shift2 = bc.mod.segment(3 * D, D);
        const auto scale2 = bc.mod.segment(4 * D, D);
        const auto gate2 = bc.mod.segment(5 * D, D);

        layer_norm(h, bc.norm1, bc.rstd1);
        bc.a = bc.norm1;
        bc.a.array().rowwise() *= (scale1.array() + T(1));
        bc.a.rowwise() += shift1;

        Mat q = bc.a * slot(params_, s.wq);
        Mat k = bc.a * slot(params_, s.wk);
        bc.v = bc.a * slot(params_, s.wv);

        const auto cond_table = slot(params_, s.cond);
        const auto role_table = slot(params_, s.role);
        Mat emb(n, dh);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& tag = seq.tags[static_cast<std::size_t>(i)];
            emb.row(i) = cond_table.row(static_cast<int>(tag.c)) + role_table.row(static_cast<int>(tag.r));
        }
        bc.q_rot.resize(n, D);
        bc.k_rot.resize(n, D);
        Mat attn(n, D);
        bc.probs.resize(static_cast<std::size_t>(config_.heads));
        for (int hd = 0; hd < config_.heads; ++hd) {
            Mat qh = q.middleCols(hd * dh, dh) + emb;
            Mat kh = k.middleCols(hd * dh, dh) + emb;
            rotate_rows(qh, rot, false);
            rotate_rows(kh, rot, false);
            bc.q_rot.middleCols(hd * dh, dh) = qh;
            bc.k_rot.middleCols(hd * dh, dh) = kh;
            Mat scores = (qh * kh.transpose()) * attn_scale;
            for (Eigen::Index i = 0; i < n; ++i) {
                const T mx = scores.row(i).maxCoeff();
                scores.row(i) = (scores.row(i).array() - mx).exp();
                scores.row(i) /= scores.row(i).sum();
            }
            attn.middleCols(hd * dh, dh) = scores * bc.v.middleCols(hd * dh, dh);
            bc.probs[static_cast<std::size_t>(hd)] = std::move(scores);
        }
        bc.attn_out = attn * slot(params_, s.wo);
        bc.attn_out.rowwise() += RowVec(slot(params_, s.bo));
        h.array() += bc.attn_out.array().rowwise() * gate1.array();
        bc.h_mid = h;

        layer_norm(h, bc.norm2, bc.rstd2);
        bc.m = bc.norm2;
        bc.m.array().rowwise() *= (scale2.array() + T(1));
        bc.m.rowwise() += shift2;
        bc.z = bc.m * slot(params_, s.w1);
        bc.z.rowwise() += RowVec(slot(params_, s.b1));
        bc.g = bc.z.unaryExpr([](T v) { return gelu(v); });
        bc.f = bc.g * slot(params_, s.w2);
        bc.f.rowwise() += RowVec(slot(params_, s.b2));
        h.array() += bc.f.array().rowwise() * gate2.array();
    }

    c.h_final = h.middleRows(c.out_start, c.out_count);
    if (config_.final_norm) {
        layer_norm(c.h_final, c.norm_final, c.rstd_final);
    } else {
        c.norm_final = c.h_final;
    }
    c.final_mod = c.cond * slot(params_, slots_.final_mod_w) + slot(params_, slots_.final_mod_b);
    Mat mf = c.norm_final;
    mf.array().rowwise() *= (c.final_mod.segment(D, D).array() + T(1));
    mf.rowwise() += c.final_mod.segment(0, D);
    Mat y = mf * slot(params_, slots_.out_w);
    y.rowwise() += RowVec(slot(params_, slots_.out_b));
    return y;
}

template <typename T>
void ToyDiT<T>::backward(const Cache& c, const Mat& d_out, std::vector<T>& grad, Mat* d_input) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), T(0));
    if (d_out.rows() != c.out_count || d_out.cols() != config_.latent_dim) {
        throw ShapeError("ToyDiT::backward: gradient shape does not match the output block");
    }
    const int D = config_.model_dim;
    const int dh = config_.head_dim();
    const auto n = c.x.rows();
    const T attn_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const RotaryTable rot = build_rotary(c.tags, config_.mspe, c.freqs);

    RowVec d_cond = RowVec::Zero(D);

    // Output head.
    Mat mf = c.norm_final;
    mf.array().rowwise() *= (c.final_mod.segment(D, D).array() + T(1));
    mf.rowwise() += c.final_mod.segment(0, D);
    slot(grad, slots_.out_w).noalias() += mf.transpose() * d_out;
    slot(grad, slots_.out_b) += d_out.colwise().sum();
    const Mat d_mf = d_out * slot(params_, slots_.out_w).transpose();
    RowVec d_fmod(2 * D);
    d_fmod.segment(0, D) = d_mf.colwise().sum();
    d_fmod.segment(D, D) = (d_mf.array() * c.norm_final.array()).colwise().sum();
    slot(grad, slots_.final_mod_w).noalias() += c.cond.transpose() * d_fmod;
    slot(grad, slots_.final_mod_b) += d_fmod;
    d_cond.noalias() += d_fmod * slot(params_, slots_.final_mod_w).transpose();
    Mat d_norm_final = d_mf;
    d_norm_final.array().rowwise() *= (c.final_mod.segment(D, D).array() + T(1));

    Mat dh_all = Mat::Zero(n, D);
    if (config_.final_norm) {
        Mat d_rows = Mat::Zero(c.out_count, D);
        layer_norm_backward(d_norm_final, c.norm_final, c.rstd_final, d_rows);
        dh_all.middleRows(c.out_start, c.out_count) = d_rows;
    } else {
        dh_all.middleRows(c.out_start, c.out_count) = d_norm_final;
    }

    for (std::size_t li = slots_.blocks.size(); li-- > 0;) {
        const auto& s = slots_.blocks[li];
        const auto& bc = c.blocks[li];
        const auto scale1 = bc.mod.segment(D, D);
        const auto gate1 = bc.mod.segment(2 * D, D);
        const auto scale2 = bc.mod.segment(4 * D, D);
        const auto gate2 = bc.mod.segment(5 * D, D);
        RowVec d_mod = RowVec::Zero(6 * D);

        // MLP branch: h_out = h_mid + f * gate2.
        Mat d_f = dh_all;
        d_f.array().rowwise() *= gate2.array();
        d_mod.segment(5 * D, D) = (dh_all.array() * bc.f.array()).colwise().sum();
        slot(grad, s.w2).noalias() += bc.g.transpose() * d_f;
        slot(grad, s.b2) += d_f.colwise().sum();
        Mat d_z = d_f * slot(params_, s.w2).transpose();
        d_z.array() *= bc.z.unaryExpr([](T v) { return gelu_grad(v); }).array();
        slot(grad, s.w1).noalias() += bc.m.transpose() * d_z;
        slot(grad, s.b1) += d_z.colwise().sum();
        const Mat d_m = d_z * slot(params_, s.w1).transpose();
        d_mod.segment(3 * D, D) = d_m.colwise().sum();
        d_mod.segment(4 * D, D) = (d_m.array() * bc.norm2.array()).colwise().sum();
        Mat d_norm2 = d_m;
        d_norm2.array().rowwise() *= (scale2.array() + T(1));
        layer_norm_backward(d_norm2, bc.norm2, bc.rstd2, dh_all);

        // Attention branch: h_mid = h_in + attn_out * gate1.
        Mat d_attn_out = dh_all;
        d_attn_out.array().rowwise() *= gate1.array();
        d_mod.segment(2 * D, D) = (dh_all.array() * bc.attn_out.array()).colwise().sum();
        slot(grad, s.bo) += d_attn_out.colwise().sum();
        // Recompute the pre-projection head outputs.
        Mat attn(n, D);
        for (int hd = 0; hd < config_.heads; ++hd) {
            attn.middleCols(hd * dh, dh) = bc.probs[static_cast<std::size_t>(hd)] * bc.v.middleCols(hd * dh, dh);
        }
        slot(grad, s.wo).noalias() += attn.transpose() * d_attn_out;
        const Mat d_attn = d_attn_out * slot(params_, s.wo).transpose();

        Mat d_q(n, D);
        Mat d_k(n, D);
        Mat d_v(n, D);
        Mat d_emb = Mat::Zero(n, dh);
        for (int hd = 0; hd < config_.heads; ++hd) {
            const Mat& p = bc.probs[static_cast<std::size_t>(hd)];
            const auto d_oh = d_attn.middleCols(hd * dh, dh);
            d_v.middleCols(hd * dh, dh).noalias() = p.transpose() * d_oh;
            Mat d_p = d_oh * bc.v.middleCols(hd * dh, dh).transpose();
            Mat d_s = p;
            for (Eigen::Index i = 0; i < n; ++i) {
                const T dot = (d_p.row(i).array() * p.row(i).array()).sum();
                d_s.row(i).array() *= (d_p.row(i).array() - dot);
            }
            d_s *= attn_scale;
            Mat d_qr = d_s * bc.k_rot.middleCols(hd * dh, dh);
            Mat d_kr = d_s.transpose() * bc.q_rot.middleCols(hd * dh, dh);
            rotate_rows(d_qr, rot, true);
            rotate_rows(d_kr, rot, true);
            d_q.middleCols(hd * dh, dh) = d_qr;
            d_k.middleCols(hd * dh, dh) = d_kr;
            d_emb += d_qr + d_kr;
        }
        auto g_cond = slot(grad, s.cond);
        auto g_role = slot(grad, s.role);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& tag = c.tags[static_cast<std::size_t>(i)];
            g_cond.row(static_cast<int>(tag.c)) += d_emb.row(i);
            g_role.row(static_cast<int>(tag.r)) += d_emb.row(i);
        }
        slot(grad, s.wq).noalias() += bc.a.transpose() * d_q;
        slot(grad, s.wk).noalias() += bc.a.transpose() * d_k;
        slot(grad, s.wv).noalias() += bc.a.transpose() * d_v;
        Mat d_a = d_q * slot(params_, s.wq).transpose();
        d_a.noalias() += d_k * slot(params_, s.wk).transpose();
        d_a.noalias() += d_v * slot(params_, s.wv).transpose();
        d_mod.segment(0, D) = d_a.colwise().sum();
        d_mod.segment(D, D) = (d_a.array() * bc.norm1.array()).colwise().sum();
        Mat d_norm1 = d_a;
        d_norm1.array().rowwise() *= (scale1.array() + T(1));
        layer_norm_backward(d_norm1, bc.norm1, bc.rstd1, dh_all);

        slot(grad, s.mod_w).noalias() += c.cond.transpose() * d_mod;
        slot(grad, s.mod_b) += d_mod;
        d_cond.noalias() += d_mod * slot(params_, s.mod_w).transpose();
    }

    slot(grad, slots_.in_w).noalias() += c.x.transpose() * dh_all;
    slot(grad, slots_.in_b) += dh_all.colwise().sum();
    if (d_input) *d_input = dh_all * slot(params_, slots_.in_w).transpose();

    if (config_.time_conditioning) {
        RowVec d_pre = d_cond;
        for (Eigen::Index i = 0; i < d_pre.size(); ++i) {
            const T x = c.time_pre(i);
            const T sg = sigmoid(x);
            d_pre(i) *= sg * (T(1) + x * (T(1) - sg));
        }
        slot(grad, slots_.time_w).noalias() += c.temb.transpose() * d_pre;
        slot(grad, slots_.time_b) += d_pre;
    }
}

template class ToyDiT<float>;
template class ToyDiT<double>;

}  // namespace lightmover
