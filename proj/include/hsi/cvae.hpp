#pragma once

// Conditional VAE over body feature maps: spiral-convolution encoder with mesh
// pooling, a decoder conditioned on vertex positions, training and sampling.

#include "hsi/autodiff.hpp"
#include "hsi/interaction.hpp"
#include "hsi/meshnet.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hsi {

struct ModelConfig {
    int latent_dim = 256;
    int conv_width = 64;
    int fc_width = 512;
    int pool_blocks = 3;    // encoder {spiralconv -> pool} blocks
    int decoder_convs = 4;  // hidden spiral convolutions before the output layer
    int spiral_length = 9;
    int feature_level = 1;  // hierarchy level the feature maps live on
    int class_count = 9;    // feature classes including void
    double alpha = 0.1;
    double lambda_c = 1.0;
    double lambda_s = 1.0;

    int input_channels() const { return 4 + class_count; } // xyz, contact, one-hot semantics
    int output_channels() const { return 1 + class_count; }
    void validate() const;
    std::string to_json() const; // canonical: sorted keys, no whitespace
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

// Mesh pyramid and spiral tables the network is wired on.
struct ModelTopology {
    MeshHierarchy hierarchy;
    std::vector<SpiralIndex> spirals; // one per level

    std::size_t body_vertices() const { return hierarchy.levels.front().vertex_count(); }
    std::size_t level_vertices(int level) const { return hierarchy.levels.at(level).vertex_count(); }
    // Full-resolution vertex of each vertex on `level` (down maps are selections).
    std::vector<int> level_vertex_ids(int level) const;
};

std::shared_ptr<const ModelTopology> make_topology(MeshHierarchy hierarchy, int spiral_length);
// The humanoid's pyramid, shared for the life of the process.
std::shared_ptr<const ModelTopology> humanoid_topology();

template <class T>
class CvaeNet {
public:
    using Mat = ad::Matrix<T>;
    using Tape = ad::Tape<T>;

    CvaeNet(const ModelConfig& config, std::shared_ptr<const ModelTopology> topology);

    const ModelConfig& config() const { return config_; }
    const ModelTopology& topology() const { return *topology_; }
    std::shared_ptr<const ModelTopology> topology_ptr() const { return topology_; }
    int feature_vertices() const { return static_cast<int>(topology_->level_vertices(config_.feature_level)); }

    std::vector<Mat> params;
    std::vector<std::string> names;

    // He-normal weights, zero biases.
    void initialize(std::uint64_t seed);
    // Zeroes the mu/logvar heads and the output convolution.
    void zero_final_layers();

    struct Bound {
        std::vector<ad::Var> p;
    };
    Bound bind(Tape& tape, bool trainable) const;

    // input: (batch * V) x input_channels. Returns (mu, logvar), each batch x latent.
    std::pair<ad::Var, ad::Var> encode(Tape& tape, const Bound& b, ad::Var input, int batch) const;
    // z: batch x latent, positions: (batch * V) x 3. Returns (contact, semantics).
    std::pair<ad::Var, ad::Var> decode(Tape& tape, const Bound& b, ad::Var z, ad::Var positions, int batch) const;

    struct Losses {
        ad::Var total, kl, rec;
    };
    // Per-sample Eq. 6-8 losses averaged over the batch (times `weight`).
    Losses loss(Tape& tape, ad::Var contact, ad::Var semantics, const Mat& contact_target, const Mat& semantic_target,
                ad::Var mu, ad::Var logvar, int batch, T weight = T(1)) const;

private:
    ad::Var spiral_conv(Tape& tape, ad::Var x, ad::Var w, ad::Var b, int level, int batch) const;
    std::size_t index_of(const std::string& name) const;

    ModelConfig config_;
    std::shared_ptr<const ModelTopology> topology_;
    std::vector<ad::SparseRows<T>> down_;
};

extern template class CvaeNet<float>;
extern template class CvaeNet<double>;

// Network inputs for a set of frames, stacked in frame order.
template <class T>
struct BatchTensors {
    ad::Matrix<T> input;     // (B*V) x input_channels
    ad::Matrix<T> positions; // (B*V) x 3
    ad::Matrix<T> contact;   // (B*V) x 1
    ad::Matrix<T> semantics; // (B*V) x class_count, one-hot
};
template <class T>
BatchTensors<T> make_batch(const InteractionDataset& ds, std::span<const int> frames, int class_count);

struct TrainingMeta {
    std::uint64_t seed = 0;
    long steps = 0;
    int epochs = 0;
    std::vector<double> loss_curve; // per step, training batch loss
    std::vector<double> val_curve;  // per epoch, validation loss (empty without a split)
};

struct Checkpoint {
    ModelConfig config;
    std::shared_ptr<const ModelTopology> topology;
    std::vector<ad::Matrix<float>> params;
    std::vector<std::string> param_names;
    std::vector<std::string> class_names;
    TrainingMeta meta;

    CvaeNet<float> network() const;
};

// "HSICKPT1" | u64 header bytes | canonical JSON header | little-endian blobs.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
    int epochs = 40;
    int batch_size = 64;
    int micro_batch = 16;  // fixed shard size; shards run in parallel and reduce in order
    double lr = 1e-3;
    std::uint64_t seed = 0;
    long max_steps = -1;   // stop early after this many steps (-1: no cap)
    double val_fraction = 0.1;
    int patience = 0;      // epochs without validation improvement before stopping (0: off)
    double target_accuracy = 0.0; // stop once training contact accuracy reaches this (0: off)
    int accuracy_every = 50;      // steps between those checks
    std::function<void(long step, int epoch, double loss)> on_step;
};

Checkpoint train(const InteractionDataset& ds, const ModelConfig& config, std::shared_ptr<const ModelTopology> topology,
                 const TrainOptions& options);

// Frames held out for validation: hash of the frame index.
bool is_validation_frame(std::size_t index, double fraction);

// Reconstruction with z = mu: fraction of vertices whose thresholded contact matches.
double contact_accuracy(const Checkpoint& ckpt, const InteractionDataset& ds, std::span<const int> frames);

// Decodes one latent vector for canonical positions at feature resolution.
FeatureMap decode_map(const Checkpoint& ckpt, const MatrixRf& positions, const Eigen::VectorXf& z);

// Canonicalizes the body, then decodes n latent draws (z = 0 when `mode`).
std::vector<FeatureMap> sample(const Checkpoint& ckpt, const BodyMesh& body, int n, std::uint64_t seed,
                               bool mode = false);

// Canonical body positions at feature resolution.
MatrixRf canonical_feature_positions(const Checkpoint& ckpt, const BodyMesh& body);

} // namespace hsi
