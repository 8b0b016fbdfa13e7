#include "clbench/networks.hpp"

#include <stdexcept>

namespace clbench {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::reduced_resnet18: return "reduced_resnet18";
    case EncoderKind::mlp: return "mlp";
  }
  throw std::logic_error("unknown EncoderKind");
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "reduced_resnet18") return EncoderKind::reduced_resnet18;
  if (s == "mlp") return EncoderKind::mlp;
  throw std::invalid_argument("unknown encoder: " + s);
}

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int64_t in_planes, int64_t planes, int64_t stride) {
  conv1 = register_module("conv1", conv3x3(in_planes, planes, stride));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
  conv2 = register_module("conv2", conv3x3(planes, planes, 1));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
  if (stride != 1 || in_planes != planes) {
    shortcut = torch::nn::Sequential(
        torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in_planes, planes, 1).stride(stride).bias(false)),
        torch::nn::BatchNorm2d(planes));
  }
  if (!shortcut.is_empty()) register_module("shortcut", shortcut);
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = bn2(conv2(out));
  out = out + (shortcut.is_empty() ? x : shortcut->forward(x));
  return torch::relu(out);
}

ReducedResNet18Impl::ReducedResNet18Impl(int64_t in_channels) {
  const int64_t widths[4] = {20, 40, 80, 160};
  conv1 = register_module("conv1", conv3x3(in_channels, widths[0], 1));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(widths[0]));
  auto make_stage = [](int64_t in, int64_t out, int64_t stride) {
    return torch::nn::Sequential(BasicBlock(in, out, stride), BasicBlock(out, out, 1));
  };
  layer1 = register_module("layer1", make_stage(widths[0], widths[0], 1));
  layer2 = register_module("layer2", make_stage(widths[0], widths[1], 2));
  layer3 = register_module("layer3", make_stage(widths[1], widths[2], 2));
  layer4 = register_module("layer4", make_stage(widths[2], widths[3], 2));
}

torch::Tensor ReducedResNet18Impl::forward(torch::Tensor x) {
  x = torch::relu(bn1(conv1(x)));
  x = layer1->forward(x);
  x = layer2->forward(x);
  x = layer3->forward(x);
  x = layer4->forward(x);
  x = torch::adaptive_avg_pool2d(x, {1, 1});
  return x.flatten(1);
}

MlpEncoderImpl::MlpEncoderImpl(int64_t input_dim, int64_t hidden_dim, int64_t embedding_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(input_dim, hidden_dim));
  fc2 = register_module("fc2", torch::nn::Linear(hidden_dim, hidden_dim));
  fc3 = register_module("fc3", torch::nn::Linear(hidden_dim, embedding_dim));
}

torch::Tensor MlpEncoderImpl::forward(torch::Tensor x) {
  x = x.flatten(1);
  x = torch::relu(fc1(x));
  x = torch::relu(fc2(x));
  return fc3(x);
}

EncoderImpl::EncoderImpl(const NetworkSpec& spec) {
  switch (spec.encoder) {
    case EncoderKind::reduced_resnet18:
      resnet = register_module("resnet", ReducedResNet18(spec.in_channels));
      output_dim_ = ReducedResNet18Impl::kEmbeddingDim;
      if (spec.embedding_dim != output_dim_)
        throw std::invalid_argument("reduced_resnet18 embedding_dim is fixed at 160");
      break;
    case EncoderKind::mlp:
      mlp = register_module("mlp",
                            MlpEncoder(spec.input_dim(), spec.mlp_hidden, spec.embedding_dim));
      output_dim_ = spec.embedding_dim;
      break;
  }
}

torch::Tensor EncoderImpl::forward(torch::Tensor x) {
  return resnet ? resnet->forward(x) : mlp->forward(x);
}

ProjectionMlpImpl::ProjectionMlpImpl(int64_t input_dim, int64_t hidden_dim, int64_t output_dim) {
  fc1 = register_module("fc1", torch::nn::Linear(input_dim, hidden_dim));
  fc2 = register_module("fc2", torch::nn::Linear(hidden_dim, output_dim));
}

torch::Tensor ProjectionMlpImpl::forward(torch::Tensor x) {
  return fc2(torch::relu(fc1(x)));
}

TwinNetwork::TwinNetwork(const NetworkSpec& spec, double ema_rate)
    : spec_(spec), ema_rate_(ema_rate) {
  if (ema_rate < 0 || ema_rate > 1) throw std::invalid_argument("ema_rate must lie in [0,1]");
  online_encoder_ = Encoder(spec);
  online_projector_ =
      ProjectionMlp(online_encoder_->output_dim(), spec.projector_hidden, spec.projection_dim);
  predictor_ = ProjectionMlp(spec.projection_dim, spec.predictor_hidden, spec.projection_dim);
  target_encoder_ = Encoder(spec);
  target_projector_ =
      ProjectionMlp(online_encoder_->output_dim(), spec.projector_hidden, spec.projection_dim);
  for (auto& p : target_encoder_->parameters()) p.set_requires_grad(false);
  for (auto& p : target_projector_->parameters()) p.set_requires_grad(false);
  init_target_from_online();
  target_encoder_->eval();
  target_projector_->eval();
}

OnlineForward TwinNetwork::forward_online(const torch::Tensor& images, bool train_mode) {
  online_encoder_->train(train_mode);
  online_projector_->train(train_mode);
  predictor_->train(train_mode);
  OnlineForward out;
  out.embedding = online_encoder_->forward(images);
  out.projection = online_projector_->forward(out.embedding);
  out.prediction = predictor_->forward(out.projection);
  return out;
}

torch::Tensor TwinNetwork::project_online(const torch::Tensor& images, bool train_mode) {
  online_encoder_->train(train_mode);
  online_projector_->train(train_mode);
  return online_projector_->forward(online_encoder_->forward(images));
}

torch::Tensor TwinNetwork::forward_target(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  target_encoder_->eval();
  target_projector_->eval();
  return target_projector_->forward(target_encoder_->forward(images));
}

void TwinNetwork::ema_update() {
  ema_module_update(*online_encoder_, *target_encoder_, ema_rate_);
  ema_module_update(*online_projector_, *target_projector_, ema_rate_);
}

void TwinNetwork::init_target_from_online() {
  copy_module_state(*online_encoder_, *target_encoder_);
  copy_module_state(*online_projector_, *target_projector_);
}

std::vector<torch::Tensor> TwinNetwork::online_parameters() {
  std::vector<torch::Tensor> params = online_encoder_->parameters();
  for (auto& p : online_projector_->parameters()) params.push_back(p);
  for (auto& p : predictor_->parameters()) params.push_back(p);
  return params;
}

std::vector<torch::Tensor> TwinNetwork::target_parameters() {
  std::vector<torch::Tensor> params = target_encoder_->parameters();
  for (auto& p : target_projector_->parameters()) params.push_back(p);
  return params;
}

void TwinNetwork::to(torch::Dtype dtype) {
  online_encoder_->to(dtype);
  online_projector_->to(dtype);
  predictor_->to(dtype);
  target_encoder_->to(dtype);
  target_projector_->to(dtype);
}

void copy_module_state(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters();
  for (auto& item : dst.named_parameters()) item.value().copy_(*src_params.find(item.key()));
  auto src_buffers = src.named_buffers();
  for (auto& item : dst.named_buffers()) item.value().copy_(*src_buffers.find(item.key()));
}

void ema_module_update(const torch::nn::Module& src, torch::nn::Module& dst, double rate) {
  torch::NoGradGuard no_grad;
  auto mix = [rate](torch::Tensor& target, const torch::Tensor& online) {
    if (target.is_floating_point())
      target.mul_(rate).add_(online, 1.0 - rate);
    else
      target.copy_(online);  // e.g. batch-norm step counters
  };
  auto src_params = src.named_parameters();
  for (auto& item : dst.named_parameters()) mix(item.value(), *src_params.find(item.key()));
  auto src_buffers = src.named_buffers();
  for (auto& item : dst.named_buffers()) mix(item.value(), *src_buffers.find(item.key()));
}

}  // namespace clbench
