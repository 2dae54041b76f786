#include <cmath>
#include <numeric>
#include <string>

#include "aal/models.hpp"

namespace aal {

void StudentConfig::validate() const {
  for (auto [value, name] : {std::pair{image_size, "image_size"}, std::pair{patch_size, "patch_size"},
                             std::pair{channels, "channels"}, std::pair{embed_dim, "embed_dim"},
                             std::pair{depth, "depth"}, std::pair{heads, "heads"},
                             std::pair{mlp_hidden, "mlp_hidden"}, std::pair{classes, "classes"}}) {
    if (value <= 0) throw ConfigError(std::string("student ") + name + " must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
}

namespace {

template <typename T>
Tensor<T> trunc_normal(Shape shape, Rng& rng, double stddev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

template <typename T>
Tensor<T> normal(Shape shape, Rng& rng, double stddev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(stddev));
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch) {
  if (images.rank() != 4 || patch <= 0 || images.dim(2) % static_cast<std::size_t>(patch) != 0 ||
      images.dim(3) % static_cast<std::size_t>(patch) != 0) {
    throw DimensionError("patchify: images " + shape_str(images.shape()) + " do not tile into " +
                         std::to_string(patch) + "-pixel patches");
  }
  const std::size_t b = images.dim(0), c = images.dim(1), p = static_cast<std::size_t>(patch),
                    gy = images.dim(2) / p, gx = images.dim(3) / p;
  Tensor<T> t = reshape(images, {b, c, gy, p, gx, p});
  t = permute(t, {0, 2, 4, 1, 3, 5});
  return reshape(t, {b, gy * gx, c * p * p});
}

template <typename T>
Student<T>::Student(const StudentConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto patch_in = static_cast<std::size_t>(config_.channels * config_.patch_size * config_.patch_size);
  const auto tokens = static_cast<std::size_t>(config_.tokens());
  const auto hidden = static_cast<std::size_t>(config_.mlp_hidden);
  const auto classes = static_cast<std::size_t>(config_.classes);

  patch_w_ = trunc_normal<T>({patch_in, d}, rng, kInitStd);
  patch_b_ = Tensor<T>({d});
  cls_token_ = normal<T>({1, d}, rng, kInitStd);
  pos_table_ = normal<T>({tokens, d}, rng, kInitStd);
  for (int n = 0; n < config_.depth; ++n) {
    Block blk;
    blk.ln1_g = Tensor<T>({d}, T(1));
    blk.ln1_b = Tensor<T>({d});
    blk.qkv_w = trunc_normal<T>({d, 3 * d}, rng, kInitStd);
    blk.qkv_b = Tensor<T>({3 * d});
    blk.proj_w = trunc_normal<T>({d, d}, rng, kInitStd);
    blk.proj_b = Tensor<T>({d});
    blk.ln2_g = Tensor<T>({d}, T(1));
    blk.ln2_b = Tensor<T>({d});
    blk.fc1_w = trunc_normal<T>({d, hidden}, rng, kInitStd);
    blk.fc1_b = Tensor<T>({hidden});
    blk.fc2_w = trunc_normal<T>({hidden, d}, rng, kInitStd);
    blk.fc2_b = Tensor<T>({d});
    blocks_.push_back(std::move(blk));
  }
  norm_g_ = Tensor<T>({d}, T(1));
  norm_b_ = Tensor<T>({d});
  head_w_ = trunc_normal<T>({d, classes}, rng, kInitStd);
  head_b_ = Tensor<T>({classes});
  for (auto& [name, t] : parameters()) t.set_requires_grad(true);
}

template <typename T>
NamedTensors<T> Student<T>::parameters() const {
  NamedTensors<T> out{{"student.patch_embed.weight", patch_w_},
                      {"student.patch_embed.bias", patch_b_},
                      {"student.cls_token", cls_token_},
                      {"student.pos_embed", pos_table_}};
  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const std::string p = "student.blocks." + std::to_string(n) + ".";
    const Block& b = blocks_[n];
    out.insert(out.end(), {{p + "norm1.weight", b.ln1_g},
                           {p + "norm1.bias", b.ln1_b},
                           {p + "attn.qkv.weight", b.qkv_w},
                           {p + "attn.qkv.bias", b.qkv_b},
                           {p + "attn.proj.weight", b.proj_w},
                           {p + "attn.proj.bias", b.proj_b},
                           {p + "norm2.weight", b.ln2_g},
                           {p + "norm2.bias", b.ln2_b},
                           {p + "mlp.fc1.weight", b.fc1_w},
                           {p + "mlp.fc1.bias", b.fc1_b},
                           {p + "mlp.fc2.weight", b.fc2_w},
                           {p + "mlp.fc2.bias", b.fc2_b}});
  }
  out.insert(out.end(), {{"student.norm.weight", norm_g_},
                         {"student.norm.bias", norm_b_},
                         {"student.head.weight", head_w_},
                         {"student.head.bias", head_b_}});
  return out;
}

template <typename T>
StudentOutput<T> Student<T>::forward(const Tensor<T>& images, bool keep_qk) const {
  const StudentConfig& c = config_;
  if (images.rank() != 4 || images.dim(1) != static_cast<std::size_t>(c.channels) ||
      images.dim(2) != static_cast<std::size_t>(c.image_size) ||
      images.dim(3) != static_cast<std::size_t>(c.image_size)) {
    throw DimensionError("student expects images [B," + std::to_string(c.channels) + "," +
                         std::to_string(c.image_size) + "," + std::to_string(c.image_size) + "], got " +
                         shape_str(images.shape()));
  }
  const std::size_t b = images.dim(0), d = static_cast<std::size_t>(c.embed_dim),
                    m = static_cast<std::size_t>(c.heads), dh = static_cast<std::size_t>(c.head_dim()),
                    l = static_cast<std::size_t>(c.tokens()), grid = static_cast<std::size_t>(c.grid());
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> x = linear(patchify(images, c.patch_size), patch_w_, patch_b_);
  Tensor<T> cls = add(Tensor<T>({b, 1, d}), cls_token_);
  x = concat<T>({cls, x}, 1);
  std::vector<std::size_t> positions(l);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  x = add(x, embedding(pos_table_, positions));

  StudentOutput<T> out;
  std::vector<Tensor<T>> layer_maps;
  for (const Block& blk : blocks_) {
    Tensor<T> h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor<T> qkv = permute(reshape(linear(h, blk.qkv_w, blk.qkv_b), {b, l, 3, m, dh}), {2, 0, 3, 1, 4});
    Tensor<T> q = reshape(slice(qkv, 0, 0, 1), {b, m, l, dh});
    Tensor<T> k = reshape(slice(qkv, 0, 1, 2), {b, m, l, dh});
    Tensor<T> v = reshape(slice(qkv, 0, 2, 3), {b, m, l, dh});
    Tensor<T> raw = matmul(q, permute(k, {0, 1, 3, 2}));
    Tensor<T> scores = scale(raw, inv_sqrt);
    Tensor<T> ctx = matmul(softmax(scores, -1), v);
    ctx = reshape(permute(ctx, {0, 2, 1, 3}), {b, l, d});
    x = add(x, linear(ctx, blk.proj_w, blk.proj_b));
    Tensor<T> h2 = layer_norm(x, blk.ln2_g, blk.ln2_b);
    x = add(x, linear(gelu(linear(h2, blk.fc1_w, blk.fc1_b)), blk.fc2_w, blk.fc2_b));

    // Class-token query against patch keys only, renormalized over patches.
    Tensor<T> cls_row = slice(slice(c.scaled_attention_maps ? scores : raw, 2, 0, 1), 3, 1, l);
    layer_maps.push_back(reshape(softmax(cls_row, -1), {b, m, grid, grid}));
    if (keep_qk) {
      out.queries.push_back(q);
      out.keys.push_back(k);
    }
  }
  x = layer_norm(x, norm_g_, norm_b_);
  out.logits = linear(reshape(slice(x, 1, 0, 1), {b, d}), head_w_, head_b_);
  out.attn.maps = concat(layer_maps, 1);
  out.attn.heads = c.heads;
  out.attn.layers = c.depth;
  return out;
}

template class Student<float>;
template class Student<double>;
template Tensor<float> patchify(const Tensor<float>&, int);
template Tensor<double> patchify(const Tensor<double>&, int);

}  // namespace aal
