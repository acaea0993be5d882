#include "herdscope/han.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "herdscope/error.hpp"
#include "herdscope/rng.hpp"

namespace herdscope {

namespace {

std::string block_name(int g, int b, int conv) {
  return "group" + std::to_string(g) + ".block" + std::to_string(b) + ".conv" +
         std::to_string(conv);
}

struct ConvSpec {
  std::string name;
  int out;
  int in;
};

std::vector<ConvSpec> conv_specs(const HanConfig& cfg) {
  const int c = cfg.channels;
  std::vector<ConvSpec> specs{{"shallow", c, 3}};
  for (int g = 0; g < cfg.groups; ++g)
    for (int b = 0; b < cfg.blocks_per_group; ++b) {
      specs.push_back({block_name(g, b, 1), c, c});
      specs.push_back({block_name(g, b, 2), c, c});
    }
  specs.push_back({"lam.fuse", c, cfg.groups * c});
  specs.push_back({"upsample", c * cfg.scale * cfg.scale, c});
  specs.push_back({"tail", 3, c});
  return specs;
}

FeatureTensor conv(const FeatureTensor& in, const WeightSet& w, const std::string& name,
                   int out, int cin) {
  return conv2d(in, w.expect(name + ".w", {out, 3, 3, cin}), w.expect(name + ".b", {out}), out);
}

void add_inplace(FeatureTensor& a, const FeatureTensor& b) {
  auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) da[i] += db[i];
}

void require_finite(const FeatureTensor& t) {
  require(t.all_finite(), ErrorCode::kNumeric, "attention input contains non-finite values");
}

}  // namespace

void validate(const HanConfig& cfg) {
  require(cfg.channels >= 1 && cfg.groups >= 1 && cfg.blocks_per_group >= 1, ErrorCode::kConfig,
          "HAN channels, groups and blocks_per_group must be >= 1");
  require(cfg.scale == 2 || cfg.scale == 4 || cfg.scale == 8, ErrorCode::kConfig,
          "HAN scale must be 2, 4 or 8");
  require(std::isfinite(cfg.lam_alpha) && std::isfinite(cfg.csam_beta), ErrorCode::kConfig,
          "HAN attention scales must be finite");
}

WeightSet random_han_weights(const HanConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  WeightSet w;
  for (const auto& s : conv_specs(cfg)) {
    const double bound = std::sqrt(6.0 / (9.0 * s.in));
    // Residual branches start small so deep stacks stay well scaled.
    const bool residual = s.name.rfind("group", 0) == 0 && s.name.back() == '2';
    w.add_uniform(s.name + ".w", {s.out, 3, 3, s.in}, residual ? 0.1 * bound : bound, rng);
    w.add_uniform(s.name + ".b", {s.out}, 0.01, rng);
  }
  w.add_uniform("csam.w", {3, 3, 3}, std::sqrt(6.0 / 27.0), rng);
  w.add_zeros("csam.b", {1});
  return w;
}

void check_han_weights(const HanConfig& cfg, const WeightSet& weights) {
  validate(cfg);
  for (const auto& s : conv_specs(cfg)) {
    weights.expect(s.name + ".w", {s.out, 3, 3, s.in});
    weights.expect(s.name + ".b", {s.out});
  }
  weights.expect("csam.w", {3, 3, 3});
  weights.expect("csam.b", {1});
}

std::vector<double> layer_attention_matrix(const FeatureTensor& features) {
  require_finite(features);
  const int n = features.layers();
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const auto fi = features.layer(i);
    for (int j = i; j < n; ++j) {
      const auto fj = features.layer(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < fi.size(); ++k) dot += static_cast<double>(fi[k]) * fj[k];
      a[i * n + j] = dot;
      a[j * n + i] = dot;
    }
  }
  for (int i = 0; i < n; ++i) {
    double* row = &a[static_cast<std::size_t>(i) * n];
    const double mx = *std::max_element(row, row + n);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += row[j] = std::exp(row[j] - mx);
    for (int j = 0; j < n; ++j) row[j] /= sum;
  }
  return a;
}

FeatureTensor layer_attention(const FeatureTensor& features, float alpha) {
  const auto att = layer_attention_matrix(features);
  const int n = features.layers();
  FeatureTensor out = features;
  if (alpha == 0.0f) return out;
  const std::size_t len = features.layer_size();
  std::vector<double> mix(len);
  for (int i = 0; i < n; ++i) {
    std::fill(mix.begin(), mix.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      const double wij = att[static_cast<std::size_t>(i) * n + j];
      const auto fj = features.layer(j);
      for (std::size_t k = 0; k < len; ++k) mix[k] += wij * fj[k];
    }
    auto oi = out.layer(i);
    for (std::size_t k = 0; k < len; ++k)
      oi[k] = static_cast<float>(alpha * mix[k] + oi[k]);
  }
  return out;
}

std::vector<double> csam_attention_map(const FeatureTensor& features,
                                       std::span<const float> kernel27, float bias) {
  require_finite(features);
  require(features.layers() == 1, ErrorCode::kInvalidArgument, "CSAM expects one layer");
  require(kernel27.size() == 27, ErrorCode::kInvalidArgument, "CSAM kernel must be 3x3x3");
  const int h = features.height();
  const int w = features.width();
  const int c = features.channels();
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  std::vector<double> att(features.size());
  std::size_t idx = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch, ++idx) {
        double z = bias;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            for (int dc = -1; dc <= 1; ++dc) {
              const int cc = ch + dc;
              if (cc < 0 || cc >= c) continue;
              z += static_cast<double>(kernel27[(dy + 1) * 9 + (dx + 1) * 3 + (dc + 1)]) *
                   features.at(yy, xx, cc);
            }
          }
        }
        att[idx] = std::clamp(1.0 / (1.0 + std::exp(-z)), lo, hi);
      }
  return att;
}

FeatureTensor channel_spatial_attention(const FeatureTensor& features, float beta,
                                        std::span<const float> kernel27, float bias) {
  const auto att = csam_attention_map(features, kernel27, bias);
  FeatureTensor out = features;
  if (beta == 0.0f) return out;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<float>(beta * att[i] * d[i] + d[i]);
  return out;
}

FeatureTensor pixel_shuffle(const FeatureTensor& features, int r) {
  require(r >= 1, ErrorCode::kInvalidArgument, "pixel_shuffle factor must be >= 1");
  require(features.layers() == 1, ErrorCode::kInvalidArgument, "pixel_shuffle expects one layer");
  require(features.channels() % (r * r) == 0, ErrorCode::kInvalidArgument,
          "pixel_shuffle: channel count " + std::to_string(features.channels()) +
              " is not divisible by " + std::to_string(r * r));
  const int c = features.channels() / (r * r);
  FeatureTensor out(features.height() * r, features.width() * r, c);
  for (int y = 0; y < features.height(); ++y)
    for (int x = 0; x < features.width(); ++x)
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            out.at(y * r + i, x * r + j, ch) = features.at(y, x, ch * r * r + i * r + j);
  return out;
}

FeatureTensor pixel_unshuffle(const FeatureTensor& features, int r) {
  require(r >= 1, ErrorCode::kInvalidArgument, "pixel_unshuffle factor must be >= 1");
  require(features.height() % r == 0 && features.width() % r == 0, ErrorCode::kInvalidArgument,
          "pixel_unshuffle: spatial size not divisible by factor");
  const int c = features.channels();
  FeatureTensor out(features.height() / r, features.width() / r, c * r * r);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            out.at(y, x, ch * r * r + i * r + j) = features.at(y * r + i, x * r + j, ch);
  return out;
}

FeatureTensor han_forward_tensor(const ImageBuffer& patch, const HanConfig& cfg,
                                 const WeightSet& weights, HanStages stages) {
  check_han_weights(cfg, weights);
  require(patch.channels() == 3, ErrorCode::kInvalidArgument, "HAN input must be RGB");
  const int c = cfg.channels;
  const int r = cfg.scale;

  const FeatureTensor shallow = conv(to_tensor(patch), weights, "shallow", c, 3);
  check_finite(shallow, "shallow conv");

  FeatureTensor stacked(cfg.groups, shallow.height(), shallow.width(), c);
  FeatureTensor x = shallow;
  for (int g = 0; g < cfg.groups; ++g) {
    FeatureTensor group_in = x;
    for (int b = 0; b < cfg.blocks_per_group; ++b) {
      FeatureTensor t = conv(x, weights, block_name(g, b, 1), c, c);
      relu_inplace(t);
      t = conv(t, weights, block_name(g, b, 2), c, c);
      add_inplace(t, x);
      x = std::move(t);
    }
    add_inplace(x, group_in);
    check_finite(x, "residual group");
    std::copy(x.data().begin(), x.data().end(), stacked.layer(g).begin());
  }

  if (stages.layer_attention) stacked = layer_attention(stacked, cfg.lam_alpha);

  // Concatenate group outputs along channels for the fuse conv.
  FeatureTensor concat(shallow.height(), shallow.width(), cfg.groups * c);
  for (int y = 0; y < concat.height(); ++y)
    for (int xx = 0; xx < concat.width(); ++xx)
      for (int g = 0; g < cfg.groups; ++g)
        for (int ch = 0; ch < c; ++ch) concat.at(y, xx, g * c + ch) = stacked.at(g, y, xx, ch);
  FeatureTensor fused = conv(concat, weights, "lam.fuse", c, cfg.groups * c);
  check_finite(fused, "layer attention fuse");

  if (stages.channel_spatial_attention)
    fused = channel_spatial_attention(fused, cfg.csam_beta, weights.expect("csam.w", {3, 3, 3}),
                                      weights.expect("csam.b", {1})[0]);
  add_inplace(fused, shallow);

  FeatureTensor up = conv(fused, weights, "upsample", c * r * r, c);
  up = pixel_shuffle(up, r);
  FeatureTensor out = conv(up, weights, "tail", 3, c);
  check_finite(out, "reconstruction");
  return out;
}

ImageBuffer han_forward(const ImageBuffer& patch, const HanConfig& cfg, const WeightSet& weights,
                        HanStages stages) {
  return to_image(han_forward_tensor(patch, cfg, weights, stages));
}

}  // namespace herdscope
