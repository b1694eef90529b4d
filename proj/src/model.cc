// Copyright (c) 2026 kwsinc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kwsinc/model.h"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "kwsinc/errors.h"
#include "kwsinc/random.h"

namespace kwsinc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Parameter layout: stem conv, then nine tensors per residual block, then
// head weight and bias.
constexpr int kStem = 0;
constexpr int kPerBlock = 9;
constexpr int kNumBlocks = 3;
enum BlockSlot {
  kConv1 = 0,
  kBn1Gamma,
  kBn1Beta,
  kConv2,
  kBn2Gamma,
  kBn2Beta,
  kShortcutConv,
  kShortcutGamma,
  kShortcutBeta,
};
constexpr int block_param(int block, BlockSlot slot) {
  return 1 + block * kPerBlock + slot;
}
constexpr int kHeadWeight = 1 + kNumBlocks * kPerBlock;
constexpr int kHeadBias = kHeadWeight + 1;

struct ConvShape {
  int cin, cout, kernel, stride, pad;
  int frames_out(int frames_in) const {
    return (frames_in + 2 * pad - kernel) / stride + 1;
  }
};

// cols row index = tap * cin + channel.
MatrixXd im2col(const MatrixXd& x, int batch, int frames_in,
                const ConvShape& s) {
  const int frames_out = s.frames_out(frames_in);
  MatrixXd cols = MatrixXd::Zero(s.cin * s.kernel, batch * frames_out);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames_out; ++t) {
      const int col = b * frames_out + t;
      for (int j = 0; j < s.kernel; ++j) {
        const int src = t * s.stride - s.pad + j;
        if (src < 0 || src >= frames_in) continue;
        cols.block(j * s.cin, col, s.cin, 1) = x.col(b * frames_in + src);
      }
    }
  }
  return cols;
}

MatrixXd col2im(const MatrixXd& dcols, int batch, int frames_in,
                const ConvShape& s) {
  const int frames_out = s.frames_out(frames_in);
  MatrixXd dx = MatrixXd::Zero(s.cin, batch * frames_in);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < frames_out; ++t) {
      const int col = b * frames_out + t;
      for (int j = 0; j < s.kernel; ++j) {
        const int src = t * s.stride - s.pad + j;
        if (src < 0 || src >= frames_in) continue;
        dx.col(b * frames_in + src) += dcols.block(j * s.cin, col, s.cin, 1);
      }
    }
  }
  return dx;
}

MatrixXd conv_forward(const MatrixXd& w, const MatrixXd& x, int batch,
                      int frames_in, const ConvShape& s, ConvCache* cache) {
  MatrixXd cols = im2col(x, batch, frames_in, s);
  MatrixXd y = w * cols;
  if (cache) {
    cache->cols = std::move(cols);
    cache->frames_in = frames_in;
  }
  return y;
}

MatrixXd conv_backward(const MatrixXd& w, const MatrixXd& dy,
                       const ConvCache& cache, int batch, const ConvShape& s,
                       MatrixXd& dw) {
  dw.noalias() = dy * cache.cols.transpose();
  MatrixXd dcols = w.transpose() * dy;
  return col2im(dcols, batch, cache.frames_in, s);
}

MatrixXd bn_train(const MatrixXd& x, const MatrixXd& gamma,
                  const MatrixXd& beta, double eps, double momentum,
                  BatchNormCache& cache, TcResNet::BnStats* running) {
  const double m = double(x.cols());
  const VectorXd mean = x.rowwise().mean();
  MatrixXd centered = x.colwise() - mean;
  const VectorXd var = centered.array().square().rowwise().sum() / m;
  cache.inv_std = (var.array() + eps).rsqrt();
  cache.normalized = cache.inv_std.asDiagonal() * centered;
  if (running) {
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    running->mean = (1 - momentum) * running->mean + momentum * mean;
    running->var = (1 - momentum) * running->var + momentum * unbias * var;
  }
  MatrixXd y = gamma.col(0).asDiagonal() * cache.normalized;
  y.colwise() += beta.col(0);
  return y;
}

MatrixXd bn_eval(const MatrixXd& x, const MatrixXd& gamma, const MatrixXd& beta,
                 double eps, const TcResNet::BnStats& stats) {
  const VectorXd scale =
      gamma.col(0).array() * (stats.var.array() + eps).rsqrt();
  const VectorXd shift = beta.col(0).array() - stats.mean.array() * scale.array();
  MatrixXd y = scale.asDiagonal() * x;
  y.colwise() += shift;
  return y;
}

MatrixXd bn_backward(const MatrixXd& dy, const MatrixXd& gamma,
                     const BatchNormCache& cache, MatrixXd& dgamma,
                     MatrixXd& dbeta) {
  const double m = double(dy.cols());
  dbeta = dy.rowwise().sum();
  dgamma = (dy.array() * cache.normalized.array()).rowwise().sum().matrix();
  const MatrixXd dxhat = gamma.col(0).asDiagonal() * dy;
  const VectorXd sum_dxhat = dxhat.rowwise().sum();
  const VectorXd sum_dxhat_xhat =
      (dxhat.array() * cache.normalized.array()).rowwise().sum();
  MatrixXd dx = m * dxhat;
  dx.colwise() -= sum_dxhat;
  dx -= sum_dxhat_xhat.asDiagonal() * cache.normalized;
  return (cache.inv_std / m).asDiagonal() * dx;
}

MatrixXd relu(MatrixXd x) { return x.cwiseMax(0.0); }

MatrixXd relu_backward(const MatrixXd& dy, const MatrixXd& out) {
  return (out.array() > 0.0).select(dy, 0.0);
}

MatrixXd global_pool(const MatrixXd& x, int batch, int frames) {
  MatrixXd pooled(x.rows(), batch);
  for (int b = 0; b < batch; ++b) {
    pooled.col(b) = x.middleCols(b * frames, frames).rowwise().mean();
  }
  return pooled;
}

ConvShape stem_shape(const ClassifierConfig& c) {
  return {c.input_channels, c.channel_plan[0], c.stem_kernel, 1,
          (c.stem_kernel - 1) / 2};
}
ConvShape conv1_shape(const ClassifierConfig& c, int b) {
  return {c.channel_plan[b], c.channel_plan[b + 1], c.block_kernel,
          c.block_stride, (c.block_kernel - 1) / 2};
}
ConvShape conv2_shape(const ClassifierConfig& c, int b) {
  return {c.channel_plan[b + 1], c.channel_plan[b + 1], c.block_kernel, 1,
          (c.block_kernel - 1) / 2};
}
ConvShape shortcut_shape(const ClassifierConfig& c, int b) {
  return {c.channel_plan[b], c.channel_plan[b + 1], 1, c.block_stride, 0};
}

void validate(const ClassifierConfig& c) {
  if (c.num_classes < 1) throw ContractError("num_classes must be >= 1");
  if (c.input_channels < 1 || c.input_frames < 1) {
    throw ContractError("input shape must be positive");
  }
  if (c.stem_kernel % 2 == 0 || c.block_kernel % 2 == 0) {
    throw ContractError("kernel sizes must be odd");
  }
  for (int ch : c.channel_plan) {
    if (ch < 1) throw ContractError("channel plan entries must be positive");
  }
}

}  // namespace

FeatureBatch make_batch(std::span<const MfccFeature* const> features) {
  FeatureBatch out;
  out.batch = static_cast<int>(features.size());
  if (features.empty()) return out;
  const auto& first = features.front()->coefficients;
  out.frames = static_cast<int>(first.cols());
  out.data.resize(first.rows(), Eigen::Index(out.batch) * out.frames);
  for (int b = 0; b < out.batch; ++b) {
    const auto& f = features[b]->coefficients;
    if (f.rows() != first.rows() || f.cols() != first.cols()) {
      throw ContractError("make_batch: feature shapes differ");
    }
    out.data.middleCols(Eigen::Index(b) * out.frames, out.frames) = f;
  }
  return out;
}

FeatureBatch make_batch(const std::vector<MfccFeature>& features) {
  std::vector<const MfccFeature*> ptrs;
  ptrs.reserve(features.size());
  for (const auto& f : features) ptrs.push_back(&f);
  return make_batch(std::span<const MfccFeature* const>(ptrs));
}

TcResNet::TcResNet(const ClassifierConfig& config, std::uint64_t seed)
    : config_(config) {
  validate(config_);
  auto conv_param = [&](const std::string& name, const ConvShape& s,
                        std::uint64_t index) {
    Rng rng(derive_seed(seed, "init", index));
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / double(s.cin * s.kernel)));
    MatrixXd w(s.cout, s.cin * s.kernel);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    }
    params_.push_back({name, std::move(w)});
  };
  auto bn_params = [&](const std::string& name, int channels) {
    params_.push_back({name + ".gamma", MatrixXd::Ones(channels, 1)});
    params_.push_back({name + ".beta", MatrixXd::Zero(channels, 1)});
    bn_stats_.push_back(
        {name, VectorXd::Zero(channels), VectorXd::Ones(channels)});
  };

  conv_param("stem.conv.weight", stem_shape(config_), 0);
  for (int b = 0; b < kNumBlocks; ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    const int out = config_.channel_plan[b + 1];
    conv_param(prefix + ".conv1.weight", conv1_shape(config_, b), 10 * b + 1);
    bn_params(prefix + ".bn1", out);
    conv_param(prefix + ".conv2.weight", conv2_shape(config_, b), 10 * b + 2);
    bn_params(prefix + ".bn2", out);
    conv_param(prefix + ".shortcut.conv.weight", shortcut_shape(config_, b),
               10 * b + 3);
    bn_params(prefix + ".shortcut.bn", out);
  }

  const int width = config_.channel_plan[3];
  Rng rng(derive_seed(seed, "init.head"));
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / width));
  MatrixXd head(config_.num_classes, width);
  for (Eigen::Index j = 0; j < head.cols(); ++j) {
    for (Eigen::Index i = 0; i < head.rows(); ++i) head(i, j) = normal(rng);
  }
  params_.push_back({"head.weight", std::move(head)});
  params_.push_back({"head.bias", MatrixXd::Zero(config_.num_classes, 1)});
}

void TcResNet::check_input(const FeatureBatch& x) const {
  if (x.batch < 1) throw ContractError("forward: empty batch");
  if (x.data.rows() != config_.input_channels ||
      x.frames != config_.input_frames ||
      x.data.cols() != Eigen::Index(x.batch) * x.frames) {
    throw ContractError(
        "forward: expected features " + std::to_string(config_.input_channels) +
        "x" + std::to_string(config_.input_frames) + ", got " +
        std::to_string(x.data.rows()) + "x" + std::to_string(x.frames));
  }
}

MatrixXd TcResNet::trunk(const FeatureBatch& x, ForwardCache* cache,
                         std::vector<BnStats>* running) const {
  check_input(x);
  const bool train = cache != nullptr;
  const int batch = x.batch;
  const double eps = config_.bn_epsilon;
  const double mom = config_.bn_momentum;
  auto bn = [&](const MatrixXd& in, int gamma_index, int stats_index,
                BatchNormCache* bc) {
    const MatrixXd& gamma = params_[gamma_index].value;
    const MatrixXd& beta = params_[gamma_index + 1].value;
    if (train) {
      return bn_train(in, gamma, beta, eps, mom, *bc,
                      running ? &(*running)[stats_index] : nullptr);
    }
    return bn_eval(in, gamma, beta, eps, bn_stats_[stats_index]);
  };

  if (cache) cache->batch = batch;
  int frames = x.frames;
  MatrixXd h = conv_forward(params_[kStem].value, x.data, batch, frames,
                            stem_shape(config_), cache ? &cache->stem : nullptr);
  for (int b = 0; b < kNumBlocks; ++b) {
    BlockCache* bc = cache ? &cache->blocks[b] : nullptr;
    const ConvShape s1 = conv1_shape(config_, b);
    const int frames_out = s1.frames_out(frames);
    MatrixXd main = conv_forward(params_[block_param(b, kConv1)].value, h,
                                 batch, frames, s1, bc ? &bc->conv1 : nullptr);
    main = relu(bn(main, block_param(b, kBn1Gamma), 3 * b,
                   bc ? &bc->bn1 : nullptr));
    if (bc) bc->hidden = main;
    main = conv_forward(params_[block_param(b, kConv2)].value, main, batch,
                        frames_out, conv2_shape(config_, b),
                        bc ? &bc->conv2 : nullptr);
    main = bn(main, block_param(b, kBn2Gamma), 3 * b + 1,
              bc ? &bc->bn2 : nullptr);
    MatrixXd shortcut = conv_forward(
        params_[block_param(b, kShortcutConv)].value, h, batch, frames,
        shortcut_shape(config_, b), bc ? &bc->shortcut : nullptr);
    shortcut = bn(shortcut, block_param(b, kShortcutGamma), 3 * b + 2,
                  bc ? &bc->bn_shortcut : nullptr);
    h = relu(main + shortcut);
    if (bc) bc->output = h;
    frames = frames_out;
  }
  MatrixXd pooled = global_pool(h, batch, frames);
  if (cache) {
    cache->pooled = pooled;
    cache->final_frames = frames;
  }
  return pooled;
}

// One class at a time: a single GEMM would pick its blocking from the head
// size, and old-class logits must stay bit-identical when the head grows.
Logits TcResNet::head(const MatrixXd& pooled) const {
  const MatrixXd& w = params_[kHeadWeight].value;
  const MatrixXd& bias = params_[kHeadBias].value;
  Logits logits(pooled.cols(), w.rows());
  for (Eigen::Index o = 0; o < w.rows(); ++o) {
    logits.col(o).noalias() = pooled.transpose() * w.row(o).transpose();
    logits.col(o).array() += bias(o, 0);
  }
  return logits;
}

Logits TcResNet::forward(const FeatureBatch& x) const {
  return head(trunk(x, nullptr, nullptr));
}

MatrixXd TcResNet::embed(const FeatureBatch& x) const {
  return trunk(x, nullptr, nullptr).transpose();
}

Logits TcResNet::forward_train(const FeatureBatch& x, ForwardCache& cache) {
  return head(trunk(x, &cache, &bn_stats_));
}

Gradients TcResNet::backward(const ForwardCache& cache,
                             const MatrixXd& dlogits) const {
  const int batch = cache.batch;
  if (dlogits.rows() != batch || dlogits.cols() != config_.num_classes) {
    throw ContractError("backward: dlogits shape mismatch");
  }
  Gradients g(params_.size());
  const MatrixXd dl = dlogits.transpose();  // [classes x batch]
  g[kHeadWeight] = dl * cache.pooled.transpose();
  g[kHeadBias] = dl.rowwise().sum();
  const MatrixXd dpooled = params_[kHeadWeight].value.transpose() * dl;

  int frames = cache.final_frames;
  MatrixXd dh(dpooled.rows(), Eigen::Index(batch) * frames);
  for (int b = 0; b < batch; ++b) {
    dh.middleCols(Eigen::Index(b) * frames, frames) =
        (dpooled.col(b) / double(frames)).replicate(1, frames);
  }

  for (int b = kNumBlocks - 1; b >= 0; --b) {
    const BlockCache& bc = cache.blocks[b];
    const MatrixXd dz = relu_backward(dh, bc.output);

    MatrixXd dgamma, dbeta;
    MatrixXd ds = bn_backward(dz, params_[block_param(b, kShortcutGamma)].value,
                              bc.bn_shortcut, dgamma, dbeta);
    g[block_param(b, kShortcutGamma)] = dgamma;
    g[block_param(b, kShortcutBeta)] = dbeta;
    MatrixXd dx = conv_backward(params_[block_param(b, kShortcutConv)].value, ds,
                                bc.shortcut, batch, shortcut_shape(config_, b),
                                g[block_param(b, kShortcutConv)]);

    MatrixXd dm = bn_backward(dz, params_[block_param(b, kBn2Gamma)].value,
                              bc.bn2, dgamma, dbeta);
    g[block_param(b, kBn2Gamma)] = dgamma;
    g[block_param(b, kBn2Beta)] = dbeta;
    MatrixXd dhidden = conv_backward(params_[block_param(b, kConv2)].value, dm,
                                     bc.conv2, batch, conv2_shape(config_, b),
                                     g[block_param(b, kConv2)]);
    dhidden = relu_backward(dhidden, bc.hidden);
    dm = bn_backward(dhidden, params_[block_param(b, kBn1Gamma)].value, bc.bn1,
                     dgamma, dbeta);
    g[block_param(b, kBn1Gamma)] = dgamma;
    g[block_param(b, kBn1Beta)] = dbeta;
    dx += conv_backward(params_[block_param(b, kConv1)].value, dm, bc.conv1,
                        batch, conv1_shape(config_, b),
                        g[block_param(b, kConv1)]);
    dh = std::move(dx);
  }
  // The stem input gradient is not needed.
  g[kStem] = dh * cache.stem.cols.transpose();
  return g;
}

void TcResNet::expand_head(int new_class_count) {
  if (new_class_count <= config_.num_classes) {
    throw ContractError("expand_head: new class count " +
                        std::to_string(new_class_count) +
                        " must exceed current " +
                        std::to_string(config_.num_classes));
  }
  const int old = config_.num_classes;
  MatrixXd& w = params_[kHeadWeight].value;
  MatrixXd& bias = params_[kHeadBias].value;
  MatrixXd nw = MatrixXd::Zero(new_class_count, w.cols());
  nw.topRows(old) = w;
  MatrixXd nb = MatrixXd::Zero(new_class_count, 1);
  nb.topRows(old) = bias;
  w = std::move(nw);
  bias = std::move(nb);
  config_.num_classes = new_class_count;
}

std::size_t TcResNet::count_params() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Logits forward(const TcResNet& model, const FeatureBatch& x) {
  return model.forward(x);
}

MatrixXd predict_proba(const Logits& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("temperature must be > 0");
  }
  MatrixXd z = logits / temperature;
  const VectorXd row_max = z.rowwise().maxCoeff();
  z = (z.colwise() - row_max).array().exp().matrix();
  const VectorXd sums = z.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * z;
}

TcResNet expand_head(TcResNet model, int new_class_count) {
  model.expand_head(new_class_count);
  return model;
}

std::size_t count_params(const TcResNet& model) { return model.count_params(); }

ModelSnapshot snapshot(const TcResNet& model) { return ModelSnapshot(model); }

namespace {

nlohmann::json config_to_json(const ClassifierConfig& c) {
  return {{"input_channels", c.input_channels},
          {"input_frames", c.input_frames},
          {"channel_plan", c.channel_plan},
          {"stem_kernel", c.stem_kernel},
          {"block_kernel", c.block_kernel},
          {"block_stride", c.block_stride},
          {"num_classes", c.num_classes},
          {"bn_momentum", c.bn_momentum},
          {"bn_epsilon", c.bn_epsilon}};
}

ClassifierConfig config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.input_channels = j.at("input_channels");
  c.input_frames = j.at("input_frames");
  c.channel_plan = j.at("channel_plan").get<std::array<int, 4>>();
  c.stem_kernel = j.at("stem_kernel");
  c.block_kernel = j.at("block_kernel");
  c.block_stride = j.at("block_stride");
  c.num_classes = j.at("num_classes");
  c.bn_momentum = j.at("bn_momentum");
  c.bn_epsilon = j.at("bn_epsilon");
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const TcResNet& model) {
  nlohmann::json doc;
  doc["format"] = "kwsinc-checkpoint";
  doc["version"] = 1;
  doc["config"] = config_to_json(model.config());
  auto& tensors = doc["tensors"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    tensors.push_back(
        {{"name", p.name},
         {"shape", {p.value.rows(), p.value.cols()}},
         {"data", std::vector<double>(p.value.data(),
                                      p.value.data() + p.value.size())}});
  }
  auto& stats = doc["bn_stats"] = nlohmann::json::array();
  for (const auto& s : model.bn_stats()) {
    stats.push_back(
        {{"name", s.name},
         {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
         {"var", std::vector<double>(s.var.data(), s.var.data() + s.var.size())}});
  }
  std::ofstream out(file);
  if (!out) throw DataError("cannot write checkpoint " + file.string());
  out << doc.dump() << '\n';
}

TcResNet load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read checkpoint " + file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("format") != "kwsinc-checkpoint") {
      throw DataError("not a kwsinc checkpoint");
    }
    if (doc.at("version") != 1) {
      throw DataError("unsupported checkpoint version " +
                      doc.at("version").dump());
    }
    TcResNet model(config_from_json(doc.at("config")), 0);
    auto& params = model.parameters();
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != params.size()) {
      throw DataError("checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name") != params[i].name) {
        throw DataError("checkpoint tensor " + std::to_string(i) + " is " +
                        t.at("name").get<std::string>() + ", expected " +
                        params[i].name);
      }
      const auto shape = t.at("shape").get<std::array<Eigen::Index, 2>>();
      if (shape[0] != params[i].value.rows() ||
          shape[1] != params[i].value.cols()) {
        throw DataError("checkpoint shape mismatch for " + params[i].name);
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != std::size_t(params[i].value.size())) {
        throw DataError("checkpoint data size mismatch for " + params[i].name);
      }
      params[i].value = Eigen::Map<const MatrixXd>(data.data(), shape[0], shape[1]);
    }
    auto& stats = model.bn_stats();
    const auto& jstats = doc.at("bn_stats");
    if (jstats.size() != stats.size()) {
      throw DataError("checkpoint bn_stats count mismatch");
    }
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const auto mean = jstats[i].at("mean").get<std::vector<double>>();
      const auto var = jstats[i].at("var").get<std::vector<double>>();
      if (mean.size() != std::size_t(stats[i].mean.size()) ||
          var.size() != mean.size()) {
        throw DataError("checkpoint bn_stats size mismatch for " + stats[i].name);
      }
      stats[i].mean = Eigen::Map<const VectorXd>(mean.data(), mean.size());
      stats[i].var = Eigen::Map<const VectorXd>(var.data(), var.size());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + file.string() + ": " + e.what());
  }
}

}  // namespace kwsinc
