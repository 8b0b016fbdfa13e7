#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace clbench {

enum class EncoderKind { reduced_resnet18, mlp };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

struct NetworkSpec {
  EncoderKind encoder = EncoderKind::reduced_resnet18;
  int64_t in_channels = 3;
  int64_t image_height = 32;
  int64_t image_width = 32;
  /// Encoder output width. 160 is fixed by the reduced ResNet-18 widths;
  /// free for the MLP encoder.
  int64_t embedding_dim = 160;
  int64_t mlp_hidden = 64;
  int64_t projector_hidden = 256;
  int64_t projection_dim = 128;
  int64_t predictor_hidden = 256;

  int64_t input_dim() const { return in_channels * image_height * image_width; }
};

// ResNet-18 shrunk for 32x32 inputs: a 3x3 stem, four stages of two basic
// blocks with widths 20/40/80/160, global average pool.
struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int64_t in_planes, int64_t planes, int64_t stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

struct ReducedResNet18Impl : torch::nn::Module {
  explicit ReducedResNet18Impl(int64_t in_channels = 3);
  torch::Tensor forward(torch::Tensor x);

  static constexpr int64_t kEmbeddingDim = 160;

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential layer1, layer2, layer3, layer4;
};
TORCH_MODULE(ReducedResNet18);

struct MlpEncoderImpl : torch::nn::Module {
  MlpEncoderImpl(int64_t input_dim, int64_t hidden_dim, int64_t embedding_dim);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};
};
TORCH_MODULE(MlpEncoder);

/// Wrapper choosing the encoder backbone named in NetworkSpec.
struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(const NetworkSpec& spec);
  torch::Tensor forward(torch::Tensor x);
  int64_t output_dim() const { return output_dim_; }

  ReducedResNet18 resnet{nullptr};
  MlpEncoder mlp{nullptr};
  int64_t output_dim_ = 0;
};
TORCH_MODULE(Encoder);

/// Two-layer MLP with one ReLU, used for both projector and predictor.
struct ProjectionMlpImpl : torch::nn::Module {
  ProjectionMlpImpl(int64_t input_dim, int64_t hidden_dim, int64_t output_dim);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ProjectionMlp);

struct OnlineForward {
  torch::Tensor embedding;   // [n, embedding_dim]
  torch::Tensor projection;  // [n, projection_dim]
  torch::Tensor prediction;  // [n, projection_dim]
};

/// Online network (encoder f, projector g, predictor q) plus a target copy
/// of f and g maintained as an exponential moving average of the online
/// parameters. The target receives no gradients and always runs in
/// evaluation mode.
class TwinNetwork {
 public:
  TwinNetwork(const NetworkSpec& spec, double ema_rate);

  OnlineForward forward_online(const torch::Tensor& images, bool train_mode = true);
  /// Online embedding+projection only (no predictor).
  torch::Tensor project_online(const torch::Tensor& images, bool train_mode = true);
  /// Target projection, computed without gradient tracking.
  torch::Tensor forward_target(const torch::Tensor& images);

  /// xi <- tau*xi + (1-tau)*theta elementwise over f and g parameters
  /// (and floating-point buffers; integral buffers are copied).
  void ema_update();
  /// Re-copies theta into xi (the start-of-stream initialization).
  void init_target_from_online();

  double ema_rate() const { return ema_rate_; }
  const NetworkSpec& spec() const { return spec_; }

  Encoder& online_encoder() { return online_encoder_; }
  ProjectionMlp& online_projector() { return online_projector_; }
  ProjectionMlp& predictor() { return predictor_; }
  Encoder& target_encoder() { return target_encoder_; }
  ProjectionMlp& target_projector() { return target_projector_; }
  const Encoder& online_encoder() const { return online_encoder_; }
  const ProjectionMlp& online_projector() const { return online_projector_; }
  const ProjectionMlp& predictor() const { return predictor_; }
  const Encoder& target_encoder() const { return target_encoder_; }
  const ProjectionMlp& target_projector() const { return target_projector_; }

  /// theta: all parameters of f, g and q.
  std::vector<torch::Tensor> online_parameters();
  std::vector<torch::Tensor> target_parameters();

  void to(torch::Dtype dtype);

 private:
  NetworkSpec spec_;
  double ema_rate_;
  Encoder online_encoder_{nullptr}, target_encoder_{nullptr};
  ProjectionMlp online_projector_{nullptr}, target_projector_{nullptr};
  ProjectionMlp predictor_{nullptr};
};

/// Copies src parameters and buffers into dst (shapes must match).
void copy_module_state(const torch::nn::Module& src, torch::nn::Module& dst);

/// In-place EMA of dst from src: dst = rate*dst + (1-rate)*src over
/// parameters and floating buffers; integral buffers are copied.
void ema_module_update(const torch::nn::Module& src, torch::nn::Module& dst, double rate);

}  // namespace clbench
