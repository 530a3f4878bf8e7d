#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenscam/tensor.hpp"

namespace lenscam {

enum class BlockKind { gmlp, vit_sa, vit_aa };
enum class Act { identity, gelu };

std::string block_kind_name(BlockKind k);
BlockKind block_kind_from_name(const std::string& name);

// Declarative description of an encoder-decoder reconstructor. The encoder
// stacks one stage per embed dim: each stage is an overlapped patch embedding
// (kernel 2P-1, stride P, padding P-1; the first stage uses the configured
// patch size, later stages halve the token grid with P=2), a batch norm over
// tokens, and one mixing block of the configured kind. The decoder is four
// 3x3 convolutions followed by a bilinear resize to the output size.
struct ModelSpec {
  BlockKind block_kind = BlockKind::gmlp;
  std::vector<int> embed_dims = {128};
  int patch = 4;
  int mlp_ratio = 6;
  int in_h = 64, in_w = 64, in_c = 1;
  int out_h = 64, out_w = 64, out_c = 1;
  bool residual = false;           // residual skip around each block
  bool spatial_gate = false;       // gMLP gate over tokens instead of features
  bool axial_parallel_sum = false; // axial passes summed instead of composed
  Act act_f = Act::gelu;           // gMLP patch-mixer activation
  Act act_h = Act::identity;       // gMLP token-mixer output activation

  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

// ---- block-level functions (templated over tape precision) --------------

template <class Real>
TensorT<Real> apply_act(TapeT<Real>& tape, const TensorT<Real>& x, Act a) {
  return a == Act::gelu ? tape.gelu(x) : x;
}

// (H,W,C) -> (n, P*P*C) patch rows, ordered (py, px, c) within a patch.
template <class Real>
TensorT<Real> patchify(TapeT<Real>& tape, const TensorT<Real>& x, int P) {
  if (x.shape.size() != 3)
    throw ShapeError("patchify input must be (h,w,c), got " +
                     shape_str(x.shape));
  const int H = x.shape[0], W = x.shape[1], C = x.shape[2];
  if (P <= 0 || H % P || W % P)
    throw ShapeError("patch size " + std::to_string(P) +
                     " must divide image " + std::to_string(H) + "x" +
                     std::to_string(W));
  auto rows = tape.reshape(x, {H * W, C});
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(H) * W);
  for (int gy = 0; gy < H / P; ++gy)
    for (int gx = 0; gx < W / P; ++gx)
      for (int py = 0; py < P; ++py)
        for (int px = 0; px < P; ++px)
          order.push_back((gy * P + py) * W + gx * P + px);
  auto gathered = tape.select_rows(rows, std::move(order));
  return tape.reshape(gathered, {(H / P) * (W / P), P * P * C});
}

// Exact inverse of patchify.
template <class Real>
TensorT<Real> unpatchify(TapeT<Real>& tape, const TensorT<Real>& tokens, int H,
                         int W, int C, int P) {
  if (tokens.shape.size() != 2 ||
      tokens.shape[0] != (H / P) * (W / P) ||
      tokens.shape[1] != P * P * C || H % P || W % P)
    throw ShapeError("unpatchify target " + std::to_string(H) + "x" +
                     std::to_string(W) + "x" + std::to_string(C) +
                     " does not match tokens " + shape_str(tokens.shape));
  auto rows = tape.reshape(tokens, {H * W, C});
  // rows is patch-ordered; build the gather that restores raster order.
  std::vector<int> order(static_cast<std::size_t>(H) * W);
  int src = 0;
  for (int gy = 0; gy < H / P; ++gy)
    for (int gx = 0; gx < W / P; ++gx)
      for (int py = 0; py < P; ++py)
        for (int px = 0; px < P; ++px)
          order[(gy * P + py) * W + gx * P + px] = src++;
  auto gathered = tape.select_rows(rows, std::move(order));
  return tape.reshape(gathered, {H, W, C});
}

// Eq-style overlapped embedding: conv2d with kernel 2P-1, stride P,
// padding P-1, mapping (H,W,C) -> (H/P, W/P, C_out).
template <class Real>
TensorT<Real> overlapped_patch_embed(TapeT<Real>& tape, const TensorT<Real>& x,
                                     const TensorT<Real>& kern,
                                     const TensorT<Real>& bias, int P) {
  if (x.shape.size() != 3)
    throw ShapeError("patch embed input must be (h,w,c)");
  const int H = x.shape[0], W = x.shape[1];
  if (P <= 0 || H % P || W % P)
    throw ShapeError("patch size " + std::to_string(P) +
                     " must divide image " + std::to_string(H) + "x" +
                     std::to_string(W));
  if (kern.shape.size() != 4 || kern.shape[0] != 2 * P - 1 ||
      kern.shape[1] != 2 * P - 1)
    throw ShapeError("patch embed kernel must be (2P-1,2P-1,ci,co), got " +
                     shape_str(kern.shape));
  return tape.conv2d(x, kern, bias, P, P - 1);
}

// r = softmax((pq)(pk)^T / div) (pv); all projections are (d,l).
template <class Real>
TensorT<Real> self_attention(TapeT<Real>& tape, const TensorT<Real>& p,
                             const TensorT<Real>& q, const TensorT<Real>& k,
                             const TensorT<Real>& v, double div) {
  if (div <= 0.0) throw DomainError("attention scale divisor must be positive");
  auto pq = tape.matmul(p, q);
  auto pk = tape.matmul(p, k);
  auto pv = tape.matmul(p, v);
  auto logits = tape.scale(tape.matmul_nt(pq, pk), 1.0 / div);
  auto attn = tape.softmax_rows(logits);
  return tape.matmul(attn, pv);
}

struct AxialParamIds {
  // height-axis then width-axis projections
  int hq, hk, hv, wq, wk, wv;
};

// Attention along the height axis (per column) then the width axis (per
// row) of an (Hg*Wg, C) token grid; `parallel_sum` applies both passes to
// the input and adds them instead of composing.
template <class Real>
TensorT<Real> axial_attention(TapeT<Real>& tape, const TensorT<Real>& grid,
                              int Hg, int Wg, const TensorT<Real>& hq,
                              const TensorT<Real>& hk, const TensorT<Real>& hv,
                              const TensorT<Real>& wq, const TensorT<Real>& wk,
                              const TensorT<Real>& wv, double div,
                              bool parallel_sum = false) {
  if (grid.shape.size() != 2 || grid.shape[0] != Hg * Wg)
    throw ShapeError("axial grid must be (Hg*Wg, C), got " +
                     shape_str(grid.shape) + " for " + std::to_string(Hg) +
                     "x" + std::to_string(Wg));

  auto height_pass = [&](const TensorT<Real>& in) {
    std::vector<TensorT<Real>> cols;
    cols.reserve(Wg);
    for (int j = 0; j < Wg; ++j) {
      std::vector<int> idx(Hg);
      for (int i = 0; i < Hg; ++i) idx[i] = i * Wg + j;
      cols.push_back(self_attention(tape, tape.select_rows(in, std::move(idx)),
                                    hq, hk, hv, div));
    }
    auto stacked = tape.concat_rows(cols);  // column-major (Wg*Hg, l)
    std::vector<int> back(static_cast<std::size_t>(Hg) * Wg);
    for (int i = 0; i < Hg; ++i)
      for (int j = 0; j < Wg; ++j) back[i * Wg + j] = j * Hg + i;
    return tape.select_rows(stacked, std::move(back));
  };
  auto width_pass = [&](const TensorT<Real>& in) {
    std::vector<TensorT<Real>> rows;
    rows.reserve(Hg);
    for (int i = 0; i < Hg; ++i) {
      std::vector<int> idx(Wg);
      for (int j = 0; j < Wg; ++j) idx[j] = i * Wg + j;
      rows.push_back(self_attention(tape, tape.select_rows(in, std::move(idx)),
                                    wq, wk, wv, div));
    }
    return tape.concat_rows(rows);  // row-major already
  };

  if (parallel_sum) return tape.add(height_pass(grid), width_pass(grid));
  return width_pass(height_pass(grid));
}

// Staged gated-MLP block: q = f(p w); s = q u + b; t = q (gate) s;
// r = h(t v). The feature gate (u over h) is the published form; the
// spatial-gate flag swaps in a token-mixing (n,n) gate.
template <class Real>
TensorT<Real> gmlp_block(TapeT<Real>& tape, const TensorT<Real>& p,
                         const TensorT<Real>& w, const TensorT<Real>& u,
                         const TensorT<Real>& b, const TensorT<Real>& v,
                         Act f = Act::gelu, Act h = Act::identity,
                         bool spatial_gate = false) {
  auto q = apply_act(tape, tape.matmul(p, w), f);
  auto s = spatial_gate ? tape.affine(u, q, b) : tape.affine(q, u, b);
  auto t = tape.gate_mul(q, s);
  return apply_act(tape, tape.matmul(t, v), h);
}

// ---- assembled model -----------------------------------------------------

// Trainable parameters are stored as float32 regardless of the tape
// precision used for a given forward pass (float for training, double for
// gradient checking).
class Model {
 public:
  Model() = default;
  Model(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }

  std::size_t param_count() const;         // every trainable scalar
  std::size_t block_param_count() const;   // mixing-block parameters only

  // Runs the model on an (in_h, in_w, in_c) input already on the tape.
  // leaves_out (optional) receives the tape handle of every parameter, in
  // params() order, for gradient readback after backward().
  template <class Real>
  TensorT<Real> forward(TapeT<Real>& tape, const TensorT<Real>& x,
                        std::vector<TensorT<Real>>* leaves_out = nullptr) const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  ModelSpec spec_;
  std::vector<NamedParam> params_;

  int find(const std::string& name) const;
};

// Multiplication count of one model forward pass at the spec's input size,
// measured by running the instrumented tape once.
std::uint64_t measured_forward_mults(const ModelSpec& spec);

// ---- template implementation --------------------------------------------

template <class Real>
TensorT<Real> Model::forward(TapeT<Real>& tape, const TensorT<Real>& x,
                             std::vector<TensorT<Real>>* leaves_out) const {
  if (x.shape != Shape{spec_.in_h, spec_.in_w, spec_.in_c})
    throw ShapeError("model expects input " +
                     shape_str({spec_.in_h, spec_.in_w, spec_.in_c}) +
                     ", got " + shape_str(x.shape));

  std::vector<TensorT<Real>> leaves;
  leaves.reserve(params_.size());
  for (const NamedParam& p : params_) {
    std::vector<Real> v(p.value.begin(), p.value.end());
    leaves.push_back(tape.param(p.shape, std::move(v)));
  }
  auto leaf = [&](const std::string& name) -> const TensorT<Real>& {
    return leaves[static_cast<std::size_t>(find(name))];
  };

  TensorT<Real> grid = x;
  int gh = spec_.in_h, gw = spec_.in_w;
  for (std::size_t s = 0; s < spec_.embed_dims.size(); ++s) {
    const std::string pre = "stage" + std::to_string(s) + ".";
    const int P = s == 0 ? spec_.patch : 2;
    const int E = spec_.embed_dims[s];
    grid = overlapped_patch_embed(tape, grid, leaf(pre + "embed.kernel"),
                                  leaf(pre + "embed.bias"), P);
    gh /= P;
    gw /= P;
    auto tokens = tape.reshape(grid, {gh * gw, E});
    tokens = tape.batch_norm(tokens, leaf(pre + "norm.gamma"),
                             leaf(pre + "norm.beta"));
    TensorT<Real> mixed;
    switch (spec_.block_kind) {
      case BlockKind::gmlp:
        mixed = gmlp_block(tape, tokens, leaf(pre + "gmlp.w"),
                           leaf(pre + "gmlp.u"), leaf(pre + "gmlp.b"),
                           leaf(pre + "gmlp.v"), spec_.act_f, spec_.act_h,
                           spec_.spatial_gate);
        break;
      case BlockKind::vit_sa:
        mixed = self_attention(tape, tokens, leaf(pre + "attn.q"),
                               leaf(pre + "attn.k"), leaf(pre + "attn.v"),
                               std::sqrt(double(E)));
        break;
      case BlockKind::vit_aa:
        mixed = axial_attention(
            tape, tokens, gh, gw, leaf(pre + "attn.hq"), leaf(pre + "attn.hk"),
            leaf(pre + "attn.hv"), leaf(pre + "attn.wq"), leaf(pre + "attn.wk"),
            leaf(pre + "attn.wv"),
            std::sqrt(double(E) * P), spec_.axial_parallel_sum);
        break;
    }
    if (spec_.residual) mixed = tape.add(mixed, tokens);
    grid = tape.reshape(mixed, {gh, gw, E});
  }

  const int E = spec_.embed_dims.back();
  TensorT<Real> y = grid;
  for (int i = 0; i < 4; ++i) {
    const std::string pre = "decoder.conv" + std::to_string(i) + ".";
    y = tape.conv2d(y, leaf(pre + "kernel"), leaf(pre + "bias"), 1, 1);
    if (i < 3) y = tape.gelu(y);
  }
  (void)E;
  y = tape.bilinear_resize(y, spec_.out_h, spec_.out_w);

  if (leaves_out) *leaves_out = std::move(leaves);
  return y;
}

}  // namespace lenscam
