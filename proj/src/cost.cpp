#include "lutkit/cost.hpp"

namespace lutkit {

namespace {

void finish(CostReport& r) {
  r.flops_reduction = static_cast<double>(r.flops_dense) / static_cast<double>(r.flops_lut);
  r.size_reduction = static_cast<double>(r.size_dense_bytes) / static_cast<double>(r.size_lut_bytes);
  r.size_reduction_with_centroids =
      static_cast<double>(r.size_dense_bytes) / static_cast<double>(r.size_lut_bytes + r.centroid_bytes);
}

}  // namespace

CostReport cost(Index n, Index d, Index m, Index k, Index v, int table_bits, int hash_levels) {
  if (n < 1 || d < 1 || m < 1) throw ConfigError("cost: N, D and M must be positive");
  PqConfig{v, k}.validate(d);
  if (table_bits != 8 && table_bits != 32) throw ConfigError("cost: table bits must be 8 or 32");
  if (hash_levels < 0) throw ConfigError("cost: hash levels must be >= 0");
  const auto un = static_cast<std::uint64_t>(n), ud = static_cast<std::uint64_t>(d), um = static_cast<std::uint64_t>(m),
             uk = static_cast<std::uint64_t>(k), uv = static_cast<std::uint64_t>(v);
  CostReport r;
  r.n = n, r.d = d, r.m = m, r.k = k, r.v = v;
  r.table_bits = table_bits;
  r.flops_lut = un * ud * uk + un * um * (ud / uv);
  r.flops_dense = un * ud * um;
  r.size_lut_bytes = (ud / uv) * uk * um * static_cast<std::uint64_t>(table_bits / 8);
  r.size_dense_bytes = 4 * ud * um;
  r.centroid_bytes = 4 * ud * uk;
  r.hash_comparisons = un * (ud / uv) * static_cast<std::uint64_t>(hash_levels);
  r.op_intensity = operation_intensity(k, v);
  finish(r);
  return r;
}

ModelCost model_cost(const ModelSpec& model, Index batch, int table_bits) {
  if (batch < 1) throw ConfigError("model_cost: batch must be positive");
  ModelCost out;
  CostReport& t = out.total;
  t.table_bits = table_bits;
  t.replaced = false;
  t.n = batch;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (!l.is_linear()) continue;
    const Index n = l.kind == LayerKind::Conv ? batch * l.conv.positions() : batch;
    CostReport r;
    if (l.replaced()) {
      const LutLayer& lut = *l.lut;
      const int levels = lut.hash_trees.empty() ? 0 : lut.hash_trees.front().levels;
      r = cost(n, lut.input_width(), lut.output_width(), lut.books.k, lut.books.v, table_bits, levels);
    } else {
      const Index d = l.rows_in(), m = l.rows_out();
      r.n = n, r.d = d, r.m = m;
      r.table_bits = table_bits;
      r.replaced = false;
      r.flops_dense = r.flops_lut = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(m);
      r.size_dense_bytes = r.size_lut_bytes = 4 * static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(m);
      finish(r);
    }
    out.layer_index.push_back(i);
    out.layers.push_back(r);
    t.replaced = t.replaced || r.replaced;
    t.flops_lut += r.flops_lut;
    t.flops_dense += r.flops_dense;
    t.size_lut_bytes += r.size_lut_bytes;
    t.size_dense_bytes += r.size_dense_bytes;
    t.centroid_bytes += r.centroid_bytes;
    t.hash_comparisons += r.hash_comparisons;
  }
  if (out.layers.empty()) throw ConfigError("model_cost: model has no linear layers");
  finish(t);
  return out;
}

}  // namespace lutkit
