#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "flexlog/datagen.hpp"

namespace flexlog {
namespace {

constexpr std::string_view kMagic = "FLXG";
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::string encode_record(const RegionSample& sample) {
  if (sample.points.cols() > 0xffff || sample.labels.size() > 0xffff) {
    throw Error(ErrorCode::InvalidArgument, "record exceeds 65535 points or labels");
  }
  std::string out;
  out.reserve(28 + sample.points.size() * 4 + sample.labels.size() * 32);
  for (int i = 0; i < 3; ++i) bytes::put_f64(out, sample.frame.center[i]);
  bytes::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(sample.points.cols()));
  for (Eigen::Index c = 0; c < sample.points.cols(); ++c) {
    for (int i = 0; i < 3; ++i) bytes::put_f32(out, sample.points(i, c));
  }
  bytes::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(sample.labels.size()));
  for (const auto& l : sample.labels) {
    for (float v : {l.dt.x(), l.dt.y(), l.dt.z(), l.theta, l.gamma, l.beta, l.width, l.score}) bytes::put_f32(out, v);
  }
  return out;
}

RegionSample decode_record(std::string_view data, std::size_t& offset) {
  bytes::Reader in(data, offset, ErrorCode::CorruptRecord);
  RegionSample s;
  for (int i = 0; i < 3; ++i) s.frame.center[i] = in.f64();
  const auto n = in.uint<std::uint16_t>();
  s.points.resize(3, n);
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < 3; ++i) s.points(i, c) = in.f32();
  }
  const auto m = in.uint<std::uint16_t>();
  s.labels.resize(m);
  for (auto& l : s.labels) {
    l.dt.x() = in.f32();
    l.dt.y() = in.f32();
    l.dt.z() = in.f32();
    l.theta = in.f32();
    l.gamma = in.f32();
    l.beta = in.f32();
    l.width = in.f32();
    l.score = in.f32();
  }
  return s;
}

RegionSample decode_record(std::string_view data) {
  std::size_t offset = 0;
  RegionSample s = decode_record(data, offset);
  if (offset != data.size()) throw Error(ErrorCode::CorruptRecord, "trailing bytes after record");
  return s;
}

std::string encode_dataset(const std::vector<RegionSample>& samples) {
  std::string out(kMagic);
  bytes::put_uint<std::uint16_t>(out, kVersion);
  bytes::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) out += encode_record(s);
  return out;
}

std::vector<RegionSample> decode_dataset(std::string_view data) {
  std::size_t offset = 0;
  bytes::Reader in(data, offset, ErrorCode::CorruptRecord);
  if (in.take(kMagic.size()) != kMagic) throw Error(ErrorCode::CorruptRecord, "bad dataset magic");
  if (in.uint<std::uint16_t>() != kVersion) throw Error(ErrorCode::CorruptRecord, "unsupported dataset version");
  const auto count = in.uint<std::uint32_t>();
  std::vector<RegionSample> out;
  out.reserve(std::min<std::size_t>(count, data.size() / 30 + 1));
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(decode_record(data, offset));
  if (offset != data.size()) throw Error(ErrorCode::CorruptRecord, "trailing bytes after last record");
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<RegionSample>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const std::string data = encode_dataset(samples);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<RegionSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dataset(data);
}

}  // namespace flexlog
