#include "ahgc/tensor_io.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ahgc/error.h"

namespace ahgc {
namespace {

constexpr std::array<char, 8> kMagic = {'A', 'H', 'G', 'C', 'T', 'N', 'S', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xff));
  }
}

template <class T>
T get(std::istream& in, const std::string& source) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError(source, 0, "truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return static_cast<T>(v);
}

}  // namespace

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.value(r, c)));
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

std::vector<NamedTensor> read_tensors(std::istream& in, const std::string& source) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError(source, 0, "not an ahgc tensor checkpoint");
  }
  const auto count = get<std::uint32_t>(in, source);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = get<std::uint32_t>(in, source);
    if (len > 4096) throw ParseError(source, 0, "tensor name too long");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw ParseError(source, 0, "truncated checkpoint");
    const auto rows = get<std::uint64_t>(in, source);
    const auto cols = get<std::uint64_t>(in, source);
    if (rows * cols > kMaxElements) throw ParseError(source, 0, "tensor '" + name + "' is implausibly large");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = std::bit_cast<double>(get<std::uint64_t>(in, source));
    }
    tensors.push_back({std::move(name), std::move(m)});
  }
  return tensors;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return read_tensors(in, path.string());
}

}  // namespace ahgc
