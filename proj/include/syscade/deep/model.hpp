#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syscade/deep/tensor.hpp"
#include "syscade/window.hpp"

namespace syscade::deep {

// Layer geometry for the sequence classifier. Defaults are desk scale;
// paper-scale settings (embed_dim 256, four LSTM layers, ...) remain
// reachable through the same fields.
struct DeepConfig {
    int vocab_size = 2;                      // includes the reserved unknown slot
    int embed_dim = 16;
    int conv_channels = 8;                   // per inception branch
    std::vector<int> kernel_sizes = {3, 5, 7};
    std::vector<int> atrous_dilations = {2, 4}; // one dilated layer per ratio
    int atrous_kernel = 3;
    int lstm_layers = 1;
    int lstm_hidden = 16;
    std::vector<int> fc_sizes = {32, 16, 8}; // hidden widths before the 2-way output
    int max_seq_len = 128;                   // run-length sequence truncation/padding
    std::uint64_t seed = 11;
};

// Parameters plus non-trained batch-norm running statistics.
struct DeepModel {
    DeepConfig cfg;
    Registry params;
    Registry buffers;
};

// Builds the parameter registry and seeds the initial weights
// deterministically (per-tensor derived streams).
DeepModel deep_init(const DeepConfig& cfg);

// One window encoded for the network: run indices and log(1 + density),
// truncated to the earliest max_seq_len runs and zero-padded, with the true
// run count kept so padding can be masked out everywhere.
struct PreparedWindow {
    std::vector<int> indices;
    std::vector<double> log_density;
    std::vector<double> sys_freq;
    int valid_len = 0;
};

// Throws DataError on an empty window, an index outside the vocabulary, or
// a sys_freq length mismatch.
PreparedWindow prepare_window(const CompressedWindow& w, const DeepConfig& cfg);

// p(malicious) per sample. Training mode uses batch statistics for batch
// norm; inference mode uses the stored running averages. Pure in the model.
std::vector<double> deep_forward(const DeepModel& m, const std::vector<PreparedWindow>& batch,
                                 bool training);

// Mean cross-entropy under training-mode statistics — the quantity the
// finite-difference oracle probes.
double deep_loss(const DeepModel& m, const std::vector<PreparedWindow>& batch,
                 const std::vector<int>& labels);

struct BackwardResult {
    double loss = 0.0;
    std::vector<double> p;   // p(malicious) per sample
    Registry grads;          // same layout as m.params
};

// Full backpropagation of deep_loss. When `update_running` is set the
// model's batch-norm running averages absorb this batch's statistics.
BackwardResult deep_backward(DeepModel& m, const std::vector<PreparedWindow>& batch,
                             const std::vector<int>& labels, bool update_running);

// Inference-mode probability for one window.
double deep_predict(const DeepModel& m, const CompressedWindow& w);

// Masked batch normalization in training mode, exposed for direct numerical
// verification. X is [B,T,C], mask is [B,T] with 1 at valid positions;
// statistics are computed over valid positions only and masked positions of
// Y are left at zero.
void masked_batch_norm(const Tensor& X, const Tensor& mask, const Tensor& gamma,
                       const Tensor& beta, Tensor& Y);

struct DeepTrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double lr = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 13;
};

// Mini-batch SGD with momentum over an already class-balanced set; shuffles
// per epoch from the seed; returns the per-epoch mean loss curve. Throws
// TrainError (with epoch/batch diagnostics) the moment the loss leaves the
// finite range. Running batch-norm statistics are updated during training
// and frozen afterwards simply because training ends.
std::vector<double> deep_train(DeepModel& m, const std::vector<const CompressedWindow*>& windows,
                               const std::vector<int>& labels, const DeepTrainConfig& tc);

// The slow path's deployable artifact: network plus the window geometry and
// vocabulary it was trained with.
struct SlowModel {
    WindowConfig window_cfg;
    Vocabulary vocab{2};
    DeepModel net;
};

std::string slow_model_to_json(const SlowModel& m);
SlowModel slow_model_from_json(const std::string& text);
void save_slow_model(const SlowModel& m, const std::string& path);
SlowModel load_slow_model(const std::string& path);

} // namespace syscade::deep
