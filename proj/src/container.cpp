#include "lutkit/container.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lutkit/io.hpp"

namespace lutkit {

namespace {

constexpr char kMagic[4] = {'L', 'U', 'T', 'N'};

enum Tag : std::uint8_t { kDense = 1, kRelu = 2, kConv = 3, kLut = 4, kLutConv = 5 };
enum TableTag : std::uint8_t { kTableF32 = 1, kTableI8 = 2 };

// Guards allocations against corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

void put_index(std::ostream& out, Index v) {
  if (v < 0 || v > 0xFFFFFFFFll) throw ConfigError("container: dimension out of range");
  le::put_u32(out, static_cast<std::uint32_t>(v));
}

Index get_index(std::istream& in) { return static_cast<Index>(le::get_u32(in)); }

void check_count(Index a, Index b, const char* what) {
  if (a < 0 || b < 0 || static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b) > kMaxElements) {
    throw CorruptionError(std::string("container: implausible ") + what + " size");
  }
}

void put_matrix(std::ostream& out, const MatrixF32& m) { le::put_f32s(out, {m.data(), static_cast<std::size_t>(m.size())}); }

MatrixF32 get_matrix(std::istream& in, Index rows, Index cols, const char* what) {
  check_count(rows, cols, what);
  MatrixF32 m(rows, cols);
  le::get_f32s(in, {m.data(), static_cast<std::size_t>(m.size())});
  return m;
}

RowVector<float> get_row(std::istream& in, Index n) {
  check_count(n, 1, "bias");
  RowVector<float> r(n);
  le::get_f32s(in, {r.data(), static_cast<std::size_t>(n)});
  return r;
}

void put_geometry(std::ostream& out, const ConvShape& s) {
  for (Index v : {s.in_channels, s.in_h, s.in_w, s.out_channels, s.window.kernel_h, s.window.kernel_w, s.window.stride,
                  s.window.pad}) {
    put_index(out, v);
  }
}

ConvShape get_geometry(std::istream& in) {
  ConvShape s;
  s.in_channels = get_index(in);
  s.in_h = get_index(in);
  s.in_w = get_index(in);
  s.out_channels = get_index(in);
  s.window.kernel_h = get_index(in);
  s.window.kernel_w = get_index(in);
  s.window.stride = get_index(in);
  s.window.pad = get_index(in);
  try {
    s.window.validate(s.in_h, s.in_w);
  } catch (const Error& e) {
    throw CorruptionError(std::string("container: bad conv geometry: ") + e.what());
  }
  return s;
}

bool store_int8(const LutLayer& lut, TableStorage storage) {
  switch (storage) {
    case TableStorage::F32: return false;
    case TableStorage::I8: return true;
    case TableStorage::Auto: return lut.qat;
  }
  return false;
}

void put_lut_body(std::ostream& out, const LutLayer& lut, const RowVector<float>& bias, TableStorage storage) {
  le::put_f32(out, lut.temp.theta);
  le::put_u8(out, lut.qat ? 1 : 0);
  put_matrix(out, lut.books.centroids);
  le::put_f32s(out, {bias.data(), static_cast<std::size_t>(bias.size())});
  if (store_int8(lut, storage)) {
    const LookupTableI8 q = lut.quantized ? *lut.quantized : quantize_table(lut.table);
    le::put_u8(out, kTableI8);
    out.write(reinterpret_cast<const char*>(q.entries.data()), static_cast<std::streamsize>(q.entries.size()));
    le::put_f32(out, q.scale);
  } else {
    le::put_u8(out, kTableF32);
    put_matrix(out, lut.table.entries);
  }
  if (lut.hash_trees.size() > 255) throw ConfigError("container: too many hash trees");
  le::put_u8(out, static_cast<std::uint8_t>(lut.hash_trees.size()));
  for (const HashTree& t : lut.hash_trees) {
    le::put_u32(out, static_cast<std::uint32_t>(t.levels));
    for (auto d : t.dims) le::put_u32(out, d);
    le::put_f32s(out, t.thresholds);
    out.write(reinterpret_cast<const char*>(t.leaves.data()), static_cast<std::streamsize>(t.leaves.size()));
  }
}

LutLayer get_lut_body(std::istream& in, Index d, Index m, Index k, Index v, RowVector<float>& bias) {
  const PqConfig cfg{v, k};
  try {
    cfg.validate(d);
  } catch (const Error& e) {
    throw CorruptionError(std::string("container: bad LUT shape: ") + e.what());
  }
  const Index c = cfg.codebooks(d);
  check_count(c * k, std::max(v, m), "LUT");

  LutLayer lut;
  lut.cfg = cfg;
  lut.temp.theta = le::get_f32(in);
  const std::uint8_t flags = le::get_u8(in);
  if (flags > 1) throw VersionError("container: unknown LUT flags " + std::to_string(flags));
  lut.qat = flags & 1;
  lut.books = CodebooksF32(c, k, v);
  lut.books.centroids = get_matrix(in, c * k, v, "centroid");
  bias = get_row(in, m);

  const std::uint8_t table_tag = le::get_u8(in);
  if (table_tag == kTableI8) {
    LookupTableI8 q;
    q.num_codebooks = c;
    q.k = k;
    q.m = m;
    q.entries.resize(c * k, m);
    le::get_bytes(in, {reinterpret_cast<char*>(q.entries.data()), static_cast<std::size_t>(q.entries.size())});
    q.scale = le::get_f32(in);
    if (!(q.scale > 0.0f) || !std::isfinite(q.scale)) throw CorruptionError("container: bad table scale");
    for (Index i = 0; i < q.entries.size(); ++i) {
      if (q.entries.data()[i] == -128) throw CorruptionError("container: INT8 table entry -128");
    }
    LookupTableF32 real = dequantize(q);
    lut.set_tables(std::move(real), std::move(q));
  } else if (table_tag == kTableF32) {
    LookupTableF32 real(c, k, m);
    real.entries = get_matrix(in, c * k, m, "table");
    LookupTableI8 q = quantize_table(real);
    lut.set_tables(std::move(real), std::move(q));
  } else {
    throw VersionError("container: unknown table tag " + std::to_string(table_tag));
  }

  const std::uint8_t trees = le::get_u8(in);
  if (trees != 0 && trees != c) throw CorruptionError("container: hash tree count does not match codebooks");
  for (std::uint8_t i = 0; i < trees; ++i) {
    HashTree t;
    const std::uint32_t levels = le::get_u32(in);
    if (levels > static_cast<std::uint32_t>(kMaxHashLevels)) throw CorruptionError("container: hash tree too deep");
    t.levels = static_cast<int>(levels);
    t.dims.resize(levels);
    for (auto& dim : t.dims) dim = le::get_u32(in);
    t.thresholds.resize((std::size_t{1} << levels) - 1);
    le::get_f32s(in, t.thresholds);
    t.leaves.resize(std::size_t{1} << levels);
    le::get_bytes(in, {reinterpret_cast<char*>(t.leaves.data()), t.leaves.size()});
    try {
      t.validate(v, k);
    } catch (const Error& e) {
      throw CorruptionError(std::string("container: bad hash tree: ") + e.what());
    }
    lut.hash_trees.push_back(std::move(t));
  }
  return lut;
}

}  // namespace

void save_model(std::ostream& out, const ModelSpec& model, TableStorage storage) {
  model.validate();
  out.write(kMagic, 4);
  le::put_u32(out, kContainerVersion);
  for (Index v : {model.input_features, model.num_classes, model.channels, model.height, model.width}) put_index(out, v);
  le::put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const Layer& l : model.layers) {
    if (l.kind == LayerKind::Relu) {
      le::put_u8(out, kRelu);
      continue;
    }
    const bool conv = l.kind == LayerKind::Conv;
    if (l.replaced()) {
      const LutLayer& lut = *l.lut;
      le::put_u8(out, conv ? kLutConv : kLut);
      if (conv) {
        put_geometry(out, l.conv);
      } else {
        put_index(out, lut.input_width());
        put_index(out, lut.output_width());
      }
      put_index(out, lut.books.k);
      put_index(out, lut.books.v);
      put_lut_body(out, lut, l.bias, storage);
    } else {
      const MatrixF32& w = l.linear_weight();
      if (w.size() == 0) throw ConfigError("container: dense layer has no weight");
      le::put_u8(out, conv ? kConv : kDense);
      if (conv) {
        put_geometry(out, l.conv);
      } else {
        put_index(out, w.rows());
        put_index(out, w.cols());
      }
      put_matrix(out, w);
      le::put_f32s(out, {l.bias.data(), static_cast<std::size_t>(l.bias.size())});
    }
  }
  if (!out) throw DataError("container: write failed");
}

ModelSpec load_model(std::istream& in) {
  char magic[4];
  le::get_bytes(in, magic);
  if (!std::equal(magic, magic + 4, kMagic)) throw CorruptionError("not a model file (bad magic)");
  const std::uint32_t version = le::get_u32(in);
  if (version != kContainerVersion) {
    throw VersionError("model file version " + std::to_string(version) + ", this build reads " +
                       std::to_string(kContainerVersion));
  }
  ModelSpec model;
  model.input_features = get_index(in);
  model.num_classes = get_index(in);
  model.channels = get_index(in);
  model.height = get_index(in);
  model.width = get_index(in);
  const std::uint32_t count = le::get_u32(in);
  if (count > 4096) throw CorruptionError("container: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t tag = le::get_u8(in);
    Layer l;
    switch (tag) {
      case kRelu: break;
      case kDense:
      case kConv: {
        l.kind = tag == kConv ? LayerKind::Conv : LayerKind::Dense;
        Index d, m;
        if (tag == kConv) {
          l.conv = get_geometry(in);
          d = l.conv.patch();
          m = l.conv.out_channels;
        } else {
          d = get_index(in);
          m = get_index(in);
        }
        l.weight = get_matrix(in, d, m, "weight");
        l.bias = get_row(in, m);
        break;
      }
      case kLut:
      case kLutConv: {
        l.kind = tag == kLutConv ? LayerKind::Conv : LayerKind::Dense;
        Index d, m;
        if (tag == kLutConv) {
          l.conv = get_geometry(in);
          d = l.conv.patch();
          m = l.conv.out_channels;
        } else {
          d = get_index(in);
          m = get_index(in);
        }
        const Index k = get_index(in), v = get_index(in);
        l.lut = get_lut_body(in, d, m, k, v, l.bias);
        break;
      }
      default:
        throw VersionError("container: unknown layer tag " + std::to_string(tag));
    }
    model.layers.push_back(std::move(l));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CorruptionError("container: trailing bytes");
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("container: inconsistent model: ") + e.what());
  }
  return model;
}

void save_model(const std::filesystem::path& path, const ModelSpec& model, TableStorage storage) {
  std::ostringstream buf(std::ios::binary);
  save_model(buf, model, storage);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load_model(in);
}

std::uint64_t container_header_bytes(const ModelSpec& model, TableStorage storage) {
  std::ostringstream buf(std::ios::binary);
  save_model(buf, model, storage);
  std::uint64_t payload = 0;
  for (const Layer& l : model.layers) {
    if (!l.is_linear()) continue;
    payload += 4 * static_cast<std::uint64_t>(l.bias.size());
    if (l.replaced()) {
      const LutLayer& lut = *l.lut;
      payload += 4 * static_cast<std::uint64_t>(lut.books.centroids.size());
      const auto entries = static_cast<std::uint64_t>(lut.table.entries.size());
      payload += store_int8(lut, storage) ? entries : 4 * entries;
      for (const HashTree& t : lut.hash_trees) {
        payload += 4 * t.dims.size() + 4 * t.thresholds.size() + t.leaves.size();
      }
    } else {
      payload += 4 * static_cast<std::uint64_t>(l.linear_weight().size());
    }
  }
  return static_cast<std::uint64_t>(buf.str().size()) - payload;
}

}  // namespace lutkit
