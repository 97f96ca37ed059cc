#ifndef HADALG_IO_HPP
#define HADALG_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hadalg/cp.hpp"
#include "hadalg/dense.hpp"
#include "hadalg/shape.hpp"
#include "hadalg/tt.hpp"

namespace hadalg {

using AnyTensor = std::variant<DenseTensor, CpTensor, TtTensor>;

// Tensor exchange format, schema version 1.
//
// Text mode is a JSON document; binary mode is a fixed little-endian layout
// ("HADALGT1" magic, u8 format tag, u32 d, i64 mode sizes, format-specific
// rank metadata, raw f64 payload).  Both carry identical content; binary
// round-trips are bit-exact.  Factor matrices are stored row-major
// (M_nu x r); TT cores are stored row-major [a][m][b].
namespace tensor_file {

inline constexpr int kVersion = 1;
inline constexpr char kMagic[8] = {'H', 'A', 'D', 'A', 'L', 'G', 'T', '1'};

enum class Format : std::uint8_t { Dense = 0, Cp = 1, Tt = 2 };

namespace detail {

static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  std::uint8_t byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (!host_is_little_endian()) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(p[i], p[sizeof(T) - 1 - i]);
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor file: truncated binary payload");
  if (!host_is_little_endian()) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(p[i], p[sizeof(T) - 1 - i]);
  }
  return v;
}

inline void put_doubles(std::ostream& os, const double* data, std::size_t n) {
  if (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(data), n * sizeof(double));
  } else {
    for (std::size_t i = 0; i < n; ++i) put(os, data[i]);
  }
}

inline void get_doubles(std::istream& is, double* data, std::size_t n) {
  if (host_is_little_endian()) {
    is.read(reinterpret_cast<char*>(data), n * sizeof(double));
    if (!is) throw std::runtime_error("tensor file: truncated binary payload");
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = get<double>(is);
  }
}

// row-major [M][r] <-> Eigen (column-major) factor matrices
inline std::vector<double> matrix_to_rows(const Eigen::MatrixXd& m) {
  std::vector<double> out(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out[i * m.cols() + j] = m(i, j);
  return out;
}

inline Eigen::MatrixXd rows_to_matrix(const std::vector<double>& v,
                                      Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw std::runtime_error("tensor file: payload length mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[i * cols + j];
  return m;
}

// internal flat core (a fastest) <-> file order [a][m][b]
inline std::vector<double> core_to_file(const std::vector<double>& c, int rp,
                                        std::int64_t m_sz, int rn) {
  std::vector<double> out(c.size());
  for (int a = 0; a < rp; ++a)
    for (std::int64_t m = 0; m < m_sz; ++m)
      for (int b = 0; b < rn; ++b)
        out[(a * m_sz + m) * rn + b] =
            c[a + static_cast<std::size_t>(rp) * (m + m_sz * b)];
  return out;
}

inline std::vector<double> core_from_file(const std::vector<double>& f, int rp,
                                          std::int64_t m_sz, int rn) {
  if (f.size() != static_cast<std::size_t>(rp) * m_sz * rn)
    throw std::runtime_error("tensor file: core payload length mismatch");
  std::vector<double> out(f.size());
  for (int a = 0; a < rp; ++a)
    for (std::int64_t m = 0; m < m_sz; ++m)
      for (int b = 0; b < rn; ++b)
        out[a + static_cast<std::size_t>(rp) * (m + m_sz * b)] =
            f[(a * m_sz + m) * rn + b];
  return out;
}

}  // namespace detail

inline void write_binary(std::ostream& os, const AnyTensor& t) {
  os.write(kMagic, sizeof(kMagic));
  detail::put<std::uint32_t>(os, kVersion);
  const Shape& shape = std::visit([](const auto& w) -> const Shape& {
    return w.shape();
  }, t);
  const auto format = static_cast<std::uint8_t>(t.index());
  detail::put(os, format);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.order()));
  for (int nu = 0; nu < shape.order(); ++nu)
    detail::put<std::int64_t>(os, shape.mode_size(nu));
  if (const auto* w = std::get_if<DenseTensor>(&t)) {
    detail::put<std::uint64_t>(os, w->values().size());
    detail::put_doubles(os, w->values().data(), w->values().size());
  } else if (const auto* w = std::get_if<CpTensor>(&t)) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(w->rank()));
    for (const auto& f : w->factors()) {
      const auto rows = detail::matrix_to_rows(f);
      detail::put_doubles(os, rows.data(), rows.size());
    }
  } else {
    const auto& tw = std::get<TtTensor>(t);
    for (int r : tw.tt_ranks())
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(r));
    for (int nu = 0; nu < shape.order(); ++nu) {
      const auto file_core =
          detail::core_to_file(tw.cores()[nu], tw.tt_ranks()[nu],
                               shape.mode_size(nu), tw.tt_ranks()[nu + 1]);
      detail::put_doubles(os, file_core.data(), file_core.size());
    }
  }
  if (!os) throw std::runtime_error("tensor file: write failed");
}

inline nlohmann::json to_json(const AnyTensor& t) {
  nlohmann::json j;
  j["version"] = kVersion;
  const Shape& shape = std::visit([](const auto& w) -> const Shape& {
    return w.shape();
  }, t);
  j["shape"] = shape.mode_sizes();
  if (const auto* w = std::get_if<DenseTensor>(&t)) {
    j["format"] = "dense";
    j["payload"] = {{"values", w->values()}};
  } else if (const auto* w = std::get_if<CpTensor>(&t)) {
    j["format"] = "cp";
    j["rank"] = w->rank();
    std::vector<std::vector<double>> factors;
    for (const auto& f : w->factors())
      factors.push_back(detail::matrix_to_rows(f));
    j["payload"] = {{"factors", factors}};
  } else {
    const auto& tw = std::get<TtTensor>(t);
    j["format"] = "tt";
    j["ranks"] = tw.tt_ranks();
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu)
      cores.push_back(detail::core_to_file(tw.cores()[nu], tw.tt_ranks()[nu],
                                           shape.mode_size(nu),
                                           tw.tt_ranks()[nu + 1]));
    j["payload"] = {{"cores", cores}};
  }
  return j;
}

inline AnyTensor from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j.at("version").get<int>() != kVersion)
    throw std::runtime_error("tensor file: unsupported schema version");
  Shape shape(j.at("shape").get<std::vector<std::int64_t>>());
  const std::string format = j.at("format").get<std::string>();
  const auto& payload = j.at("payload");
  if (format == "dense") {
    return DenseTensor(shape,
                       payload.at("values").get<std::vector<double>>());
  }
  if (format == "cp") {
    const int rank = j.at("rank").get<int>();
    auto raw = payload.at("factors").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(raw.size()) != shape.order())
      throw std::runtime_error("tensor file: factor count mismatch");
    std::vector<Eigen::MatrixXd> factors;
    for (int nu = 0; nu < shape.order(); ++nu)
      factors.push_back(
          detail::rows_to_matrix(raw[nu], shape.mode_size(nu), rank));
    return CpTensor(shape, std::move(factors));
  }
  if (format == "tt") {
    auto ranks = j.at("ranks").get<std::vector<int>>();
    auto raw = payload.at("cores").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(raw.size()) != shape.order() ||
        static_cast<int>(ranks.size()) != shape.order() + 1)
      throw std::runtime_error("tensor file: core/rank count mismatch");
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu)
      cores.push_back(detail::core_from_file(
          raw[nu], ranks[nu], shape.mode_size(nu), ranks[nu + 1]));
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }
  throw std::runtime_error("tensor file: unknown format " + format);
}

inline AnyTensor read_binary(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("tensor file: bad magic");
  if (detail::get<std::uint32_t>(is) != kVersion)
    throw std::runtime_error("tensor file: unsupported schema version");
  const auto format = detail::get<std::uint8_t>(is);
  const auto d = detail::get<std::uint32_t>(is);
  if (d == 0 || d > 100000)
    throw std::runtime_error("tensor file: implausible order");
  std::vector<std::int64_t> modes(d);
  for (auto& m : modes) m = detail::get<std::int64_t>(is);
  Shape shape(modes);
  if (format == static_cast<std::uint8_t>(Format::Dense)) {
    const auto n = detail::get<std::uint64_t>(is);
    std::vector<double> values(n);
    detail::get_doubles(is, values.data(), n);
    return DenseTensor(shape, std::move(values));
  }
  if (format == static_cast<std::uint8_t>(Format::Cp)) {
    const auto rank = detail::get<std::uint32_t>(is);
    std::vector<Eigen::MatrixXd> factors;
    for (int nu = 0; nu < shape.order(); ++nu) {
      std::vector<double> raw(static_cast<std::size_t>(shape.mode_size(nu)) *
                              rank);
      detail::get_doubles(is, raw.data(), raw.size());
      factors.push_back(
          detail::rows_to_matrix(raw, shape.mode_size(nu), rank));
    }
    return CpTensor(shape, std::move(factors));
  }
  if (format == static_cast<std::uint8_t>(Format::Tt)) {
    std::vector<int> ranks(shape.order() + 1);
    for (auto& r : ranks)
      r = static_cast<int>(detail::get<std::uint32_t>(is));
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu) {
      std::vector<double> raw(static_cast<std::size_t>(ranks[nu]) *
                              shape.mode_size(nu) * ranks[nu + 1]);
      detail::get_doubles(is, raw.data(), raw.size());
      cores.push_back(detail::core_from_file(raw, ranks[nu],
                                             shape.mode_size(nu),
                                             ranks[nu + 1]));
    }
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }
  throw std::runtime_error("tensor file: unknown format tag");
}

inline void write_file(const std::string& path, const AnyTensor& t,
                       bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  if (binary) {
    write_binary(os, t);
  } else {
    os << to_json(t).dump(2) << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline AnyTensor read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const int first = is.peek();
  if (first == '{') {
    nlohmann::json j;
    is >> j;
    return from_json(j);
  }
  return read_binary(is);
}

}  // namespace tensor_file

}  // namespace hadalg

#endif  // HADALG_IO_HPP
