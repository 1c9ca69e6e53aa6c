#pragma once

// Fully connected ReLU reward network: He-initialized weights, scalar
// forward pass, analytic parameter gradient, and full-batch gradient
// descent on the pairwise binary cross-entropy loss.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nadb/linalg.hpp"
#include "nadb/types.hpp"

namespace nadb::mlp {

using linalg::Matrix;

/// Network shape. `depth` counts weight layers: W_1 (width x input_dim),
/// W_2..W_{depth-1} (width x width), W_depth (1 x width). depth >= 2, so
/// the number of hidden ReLU layers is depth - 1.
struct MlpArch {
    int input_dim = 1;
    int depth = 2;
    int width = 1;

    int param_count() const {
        return input_dim * width + (depth - 2) * width * width + width;
    }
    bool operator==(const MlpArch&) const = default;
};

class MlpParams {
  public:
    MlpParams() = default;
    explicit MlpParams(const MlpArch& arch);

    const MlpArch& arch() const { return arch_; }
    int layer_count() const { return static_cast<int>(weights_.size()); }
    Matrix& layer(int l) { return weights_[l]; }
    const Matrix& layer(int l) const { return weights_[l]; }

    /// Exact round-trip: unflatten(arch, flatten()) == *this bitwise.
    Vec flatten() const;
    static MlpParams unflatten(const MlpArch& arch, std::span<const double> theta);

    double squared_norm() const;
    double squared_distance(const MlpParams& other) const;

    bool operator==(const MlpParams&) const = default;

  private:
    MlpArch arch_;
    std::vector<Matrix> weights_;
};

enum class RegMode {
    Theory,     // (1/w) data term + (lambda/2) ||theta - theta0||^2
    Practical,  // plain data term + lambda ||theta||^2
};

struct TrainConfig {
    double learning_rate = 0.01;
    int steps = 50;
    double reg_lambda = 1.0;
    RegMode reg_mode = RegMode::Practical;
};

/// Scratch buffers for forward/backward passes; reusable across calls to
/// avoid per-call allocation in hot loops.
class MlpWorkspace {
  public:
    MlpWorkspace() = default;
    explicit MlpWorkspace(const MlpArch& arch);

    std::vector<Vec> pre;    // pre-activations per hidden layer
    std::vector<Vec> act;    // post-ReLU activations per hidden layer
    Vec delta;               // backprop buffer
    Vec delta_next;
};

/// Zero-mean Gaussian entries, layer variance 2/fan_in. Deterministic in seed.
MlpParams init_params(const MlpArch& arch, std::uint64_t seed);

double forward(const MlpParams& params, std::span<const double> x);
double forward(const MlpParams& params, std::span<const double> x, MlpWorkspace& ws);

/// Gradient of forward() with respect to the flattened parameters
/// (ReLU subgradient 0 at kinks). Writes param_count() entries.
void param_gradient(const MlpParams& params, std::span<const double> x,
                    std::span<double> out, MlpWorkspace& ws);
Vec param_gradient(const MlpParams& params, std::span<const double> x);

/// Pairwise binary cross-entropy loss with regularization per reg_mode.
/// Empty data yields the regularizer alone.
double pair_loss(const MlpParams& params, const MlpParams& ref_params,
                 std::span<const PreferenceRecord> data, const TrainConfig& cfg);

struct TrainResult {
    MlpParams params;
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool loss_increased = false;
};

/// cfg.steps full-batch gradient-descent steps on pair_loss, warm-starting
/// from `params`. Throws NumericalFailure on a non-finite loss.
TrainResult train(const MlpParams& params, const MlpParams& ref_params,
                  std::span<const PreferenceRecord> data, const TrainConfig& cfg);

// Checkpoint format: one JSON shape line, '\n', then param_count()
// little-endian IEEE-754 doubles in flatten() order.
void save_params(const MlpParams& params, std::ostream& out);
MlpParams load_params(std::istream& in);
void save_params_file(const MlpParams& params, const std::string& path);
MlpParams load_params_file(const std::string& path);

}  // namespace nadb::mlp
