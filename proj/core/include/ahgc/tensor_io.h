#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ahgc {

// A named tensor as stored in a checkpoint.
struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

// Checkpoint layout (all integers little-endian):
//   magic   "AHGCTNS1" (8 bytes)
//   u32     tensor count
//   per tensor:
//     u32 name length, name bytes (UTF-8)
//     u64 rows, u64 cols
//     rows*cols IEEE-754 binary64 values, row-major
// Doubles are stored bit-for-bit, so save/load round-trips exactly.
void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in, const std::string& source = "checkpoint");

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

// Helpers over any parameter struct exposing for_each_tensor(name, MatrixXd&).
template <class Params>
std::vector<Eigen::MatrixXd*> tensor_refs(Params& params) {
  std::vector<Eigen::MatrixXd*> refs;
  params.for_each_tensor([&refs](const std::string&, Eigen::MatrixXd& t) { refs.push_back(&t); });
  return refs;
}

// params += scale * delta, tensor by tensor.
template <class Params>
void add_scaled(Params& params, double scale, const Params& delta) {
  auto dst = tensor_refs(params);
  auto src = tensor_refs(const_cast<Params&>(delta));
  for (std::size_t t = 0; t < dst.size(); ++t) *dst[t] += scale * (*src[t]);
}

template <class Params>
Eigen::VectorXd flatten(const Params& params) {
  auto refs = tensor_refs(const_cast<Params&>(params));
  Eigen::Index total = 0;
  for (auto* t : refs) total += t->size();
  Eigen::VectorXd flat(total);
  Eigen::Index pos = 0;
  for (auto* t : refs) {
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) flat(pos++) = (*t)(r, c);
    }
  }
  return flat;
}

template <class Params>
void unflatten(Params& params, const Eigen::VectorXd& flat) {
  Eigen::Index pos = 0;
  for (auto* t : tensor_refs(params)) {
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) (*t)(r, c) = flat(pos++);
    }
  }
}

template <class Params>
std::vector<NamedTensor> named_tensors(const Params& params) {
  std::vector<NamedTensor> out;
  const_cast<Params&>(params).for_each_tensor(
      [&out](const std::string& name, Eigen::MatrixXd& t) { out.push_back({name, t}); });
  return out;
}

}  // namespace ahgc
