#include "lutkit/lut_quant.hpp"

#include <cfenv>
#include <cmath>

namespace lutkit {

LookupTableI8 quantize_table(const LookupTableF32& table) {
  if (!table.entries.allFinite()) throw DataError("quantize_table: table contains non-finite entries");
  LookupTableI8 q;
  q.num_codebooks = table.num_codebooks;
  q.k = table.k;
  q.m = table.m;
  q.entries = Matrix<std::int8_t>::Zero(table.entries.rows(), table.entries.cols());
  const float max_abs = table.entries.size() ? table.entries.cwiseAbs().maxCoeff() : 0.0f;
  if (max_abs == 0.0f) {
    q.scale = 1.0f;
    return q;
  }
  q.scale = max_abs / static_cast<float>(kInt8TableMax);
  // nearbyint honours the current rounding mode; force ties-to-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  for (Index i = 0; i < table.entries.size(); ++i) {
    float r = std::nearbyint(table.entries.data()[i] / q.scale);
    r = std::fmin(std::fmax(r, -static_cast<float>(kInt8TableMax)), static_cast<float>(kInt8TableMax));
    q.entries.data()[i] = static_cast<std::int8_t>(r);
  }
  std::fesetround(saved);
  return q;
}

LookupTableF32 dequantize(const LookupTableI8& q) {
  LookupTableF32 t(q.num_codebooks, q.k, q.m);
  t.entries = q.entries.cast<float>() * q.scale;
  return t;
}

QatTables qat_hook(const LookupTableF32& real_table) {
  return QatTables{dequantize(quantize_table(real_table)), &real_table};
}

}  // namespace lutkit
