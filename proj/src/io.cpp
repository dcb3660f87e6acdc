#include "lutkit/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lutkit {

namespace le {

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f32s(std::ostream& out, std::span<const float> v) {
  for (float x : v) put_f32(out, x);
}

void get_bytes(std::istream& in, std::span<char> v) {
  in.read(v.data(), static_cast<std::streamsize>(v.size()));
  if (in.gcount() != static_cast<std::streamsize>(v.size())) throw DataError("unexpected end of file");
}

std::uint8_t get_u8(std::istream& in) {
  char b;
  get_bytes(in, {&b, 1});
  return static_cast<std::uint8_t>(b);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, {reinterpret_cast<char*>(b), 4});
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, {reinterpret_cast<char*>(b), 8});
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

void get_f32s(std::istream& in, std::span<float> v) {
  for (float& x : v) x = get_f32(in);
}

}  // namespace le

namespace {

constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};

std::uint32_t get_u32_be(std::istream& in) {
  unsigned char b[4];
  le::get_bytes(in, {reinterpret_cast<char*>(b), 4});
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void put_u32_be(std::ostream& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_tensor(std::ostream& out, const TensorFile& t) {
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.data.size()) throw ShapeError("tensor payload does not match dims");
  out.write(kTensorMagic, 4);
  le::put_u32(out, kTensorFileVersion);
  le::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) le::put_u64(out, d);
  le::put_f32s(out, t.data);
}

TensorFile read_tensor(std::istream& in) {
  char magic[4];
  le::get_bytes(in, magic);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw DataError("not a TNSR file");
  const auto version = le::get_u32(in);
  if (version != kTensorFileVersion) throw VersionError("unsupported TNSR version " + std::to_string(version));
  TensorFile t;
  t.dims.resize(le::get_u32(in));
  std::uint64_t count = 1;
  for (auto& d : t.dims) {
    d = le::get_u64(in);
    if (d != 0 && count > std::numeric_limits<std::uint32_t>::max() / d) throw DataError("TNSR dims too large");
    count *= d;
  }
  t.data.resize(count);
  le::get_f32s(in, t.data);
  return t;
}

void write_tensor(const std::filesystem::path& path, const TensorFile& t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

TensorFile read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor(in);
}

TensorFile to_tensor_file(const MatrixF32& m) {
  TensorFile t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

MatrixF32 to_matrix(const TensorFile& t) {
  if (t.dims.size() != 2) throw ShapeError("expected a rank-2 tensor");
  MatrixF32 m(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

TensorFile to_tensor_file(const Tensor4F32& x) {
  TensorFile t;
  t.dims = {static_cast<std::uint64_t>(x.n), static_cast<std::uint64_t>(x.channels),
            static_cast<std::uint64_t>(x.height), static_cast<std::uint64_t>(x.width)};
  t.data = x.data;
  return t;
}

Tensor4F32 to_tensor4(const TensorFile& t) {
  if (t.dims.size() != 4) throw ShapeError("expected a rank-4 tensor");
  Tensor4F32 x(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]), static_cast<Index>(t.dims[2]),
               static_cast<Index>(t.dims[3]));
  x.data = t.data;
  return x;
}

LabeledData read_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV " + path.string());
  std::vector<float> values;
  std::vector<std::int32_t> labels;
  Index cols = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2) throw DataError("CSV line " + std::to_string(line_no) + ": need features and a label");
    const Index features = static_cast<Index>(fields.size()) - 1;
    if (cols >= 0 && features != cols) throw DataError("CSV line " + std::to_string(line_no) + ": ragged row");
    cols = features;
    for (Index j = 0; j < features; ++j) {
      try {
        std::size_t used = 0;
        float v = std::stof(fields[static_cast<std::size_t>(j)], &used);
        if (!std::isfinite(v)) throw DataError("non-finite value");
        values.push_back(v);
      } catch (const std::logic_error&) {
        throw DataError("CSV line " + std::to_string(line_no) + ": bad number '" + fields[static_cast<std::size_t>(j)] + "'");
      }
    }
    std::int32_t label = 0;
    const auto& lf = fields.back();
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || label < 0) {
      throw DataError("CSV line " + std::to_string(line_no) + ": bad label '" + lf + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw DataError("CSV has no rows: " + path.string());
  LabeledData d;
  d.features = Eigen::Map<MatrixF32>(values.data(), static_cast<Index>(labels.size()), cols);
  d.labels = std::move(labels);
  return d;
}

MatrixF32 read_idx_images(const std::filesystem::path& path, Index* height, Index* width) {
  auto in = open_in(path);
  const auto magic = get_u32_be(in);
  if (magic != 0x00000803) throw DataError("not an IDX image file (u8, rank 3): " + path.string());
  const auto count = get_u32_be(in), h = get_u32_be(in), w = get_u32_be(in);
  std::vector<char> raw(static_cast<std::size_t>(count) * h * w);
  le::get_bytes(in, raw);
  MatrixF32 images(count, static_cast<Index>(h) * w);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    images.data()[i] = static_cast<float>(static_cast<unsigned char>(raw[i])) / 255.0f;
  }
  if (height) *height = h;
  if (width) *width = w;
  return images;
}

std::vector<std::int32_t> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto magic = get_u32_be(in);
  if (magic != 0x00000801) throw DataError("not an IDX label file (u8, rank 1): " + path.string());
  const auto count = get_u32_be(in);
  std::vector<char> raw(count);
  le::get_bytes(in, raw);
  std::vector<std::int32_t> labels(count);
  for (std::size_t i = 0; i < raw.size(); ++i) labels[i] = static_cast<unsigned char>(raw[i]);
  return labels;
}

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t height, std::uint32_t width) {
  if (pixels.size() != static_cast<std::size_t>(count) * height * width) throw ShapeError("IDX pixel count mismatch");
  auto out = open_out(path);
  put_u32_be(out, 0x00000803);
  put_u32_be(out, count);
  put_u32_be(out, height);
  put_u32_be(out, width);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  auto out = open_out(path);
  put_u32_be(out, 0x00000801);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace lutkit
