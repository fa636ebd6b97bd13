#include "consor/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "consor/error.hpp"

namespace consor::ad {

namespace {

constexpr std::string_view kMagic = "CSRARCH1";

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::ParseError, "archive truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string write_archive(const std::vector<NamedArray>& arrays) {
  std::string out(kMagic);
  put_le<std::uint64_t>(out, arrays.size());
  for (const auto& a : arrays) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.value.rank()));
    for (auto d : a.value.shape()) put_le<std::uint64_t>(out, d);
    for (double v : a.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedArray> read_archive(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw Error(ErrorCode::ParseError, "not a parameter archive");
  const auto count = in.le<std::uint64_t>();
  std::vector<NamedArray> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = std::string(in.take(in.le<std::uint32_t>()));
    const auto rank = in.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.le<std::uint64_t>();
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(in.le<std::uint64_t>());
    a.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(a));
  }
  if (!in.done()) throw Error(ErrorCode::ParseError, "trailing bytes after archive");
  return out;
}

}  // namespace consor::ad
