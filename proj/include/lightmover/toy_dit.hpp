#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "lightmover/tokenizer.hpp"

namespace lightmover {

struct ToyDitConfig {
    int latent_dim = 192;
    int model_dim = 128;
    int heads = 4;
    int blocks = 4;
    int mlp_ratio = 4;
    int time_embed_dim = 64;
    bool final_norm = true;
    bool time_conditioning = true;
    MspeConfig mspe;

    int head_dim() const noexcept { return model_dim / heads; }
    void validate() const;
    friend bool operator==(const ToyDitConfig&, const ToyDitConfig&) = default;
};

struct ParamSlot {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Named views into one flat parameter vector.
struct ParamLayout {
    std::vector<ParamSlot> slots;
    std::size_t total = 0;

    std::size_t add(std::string name, int rows, int cols);
    const ParamSlot& find(const std::string& name) const;
};

/// Indices of every tensor in the flat parameter vector.
struct DitSlots {
    struct Block {
        std::size_t mod_w, mod_b, wq, wk, wv, wo, bo, cond, role, w1, b1, w2, b2;
    };
    std::size_t in_w, in_b, time_w, time_b;
    std::vector<Block> blocks;
    std::size_t final_mod_w, final_mod_b, out_w, out_b;
};

enum class InitScheme : std::uint8_t {
    // Modulation and output head start at zero, so the untrained network
    // predicts zero velocity.
    zero_modulation,
    // Every tensor random; used for gradient verification.
    all_random,
};

/// Sinusoidal embedding of t (scaled by 1000), cos half then sin half.
template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> time_embedding(double t, int dim);

/// Small diffusion transformer over tagged token sequences. Pre-norm blocks
/// with MSPE self-attention and a GELU MLP, each modulated (shift, scale,
/// gate) by a projection of the time embedding. Only output-role tokens are
/// read out.
template <typename T>
class ToyDiT {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    using MapMat = Eigen::Map<Mat>;
    using ConstMapMat = Eigen::Map<const Mat>;

    struct BlockCache {
        Mat h_in, norm1, a, q_rot, k_rot, v, attn_out, h_mid, norm2, m, z, g, f;
        std::vector<Mat> probs;
        RowVec mod, rstd1, rstd2;
    };

    struct Cache {
        Mat x;
        RowVec temb, time_pre, cond;
        std::vector<BlockCache> blocks;
        Mat h_final, norm_final;
        RowVec final_mod, rstd_final;
        std::vector<PositionTag> tags;
        RotaryFrequencies freqs;
        int out_start = 0;
        int out_count = 0;
    };

    ToyDiT() = default;
    ToyDiT(const ToyDitConfig& config, std::uint64_t seed, InitScheme init = InitScheme::zero_modulation);

    const ToyDitConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::vector<T>& params() noexcept { return params_; }
    const std::vector<T>& params() const noexcept { return params_; }
    std::size_t param_count() const noexcept { return params_.size(); }

    /// Velocity for the output block, output_tokens x latent_dim.
    Mat forward(const TokenSequence& seq, double t, Cache* cache = nullptr) const;

    /// Accumulates parameter gradients for dL/dY into grad (same layout as
    /// params) and optionally returns dL/dX for the whole input sequence.
    void backward(const Cache& cache, const Mat& d_out, std::vector<T>& grad, Mat* d_input = nullptr) const;

    template <typename U>
    ToyDiT<U> cast() const;

private:
    template <typename U>
    friend class ToyDiT;

    MapMat slot(std::vector<T>& buf, std::size_t idx) const;
    ConstMapMat slot(const std::vector<T>& buf, std::size_t idx) const;

    void build_layout();

    ToyDitConfig config_;
    ParamLayout layout_;
    DitSlots slots_{};
    std::vector<T> params_;
};

template <typename T>
template <typename U>
ToyDiT<U> ToyDiT<T>::cast() const {
    ToyDiT<U> out;
    out.config_ = config_;
    out.layout_ = layout_;
    out.slots_ = slots_;
    out.params_.assign(params_.begin(), params_.end());
    return out;
}

extern template class ToyDiT<float>;
extern template class ToyDiT<double>;

}  // namespace lightmover
