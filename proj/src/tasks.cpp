#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "unfold/env.hpp"

namespace unfold {
namespace {

constexpr char kTaskMagic[4] = {'U', 'T', 'S', 'K'};
constexpr std::uint32_t kTaskVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}

  template <typename U>
  U le() {
    if (bytes_.size() - pos_ < sizeof(U)) throw SimError("truncated " + what_);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string raw(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw SimError("truncated " + what_);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_tasks(const std::vector<Task>& tasks, const std::filesystem::path& path) {
  std::string out(kTaskMagic, 4);
  put_le<std::uint32_t>(out, kTaskVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tasks.size()));
  for (const Task& t : tasks) {
    put_le<std::uint64_t>(out, t.seed);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cloth.rows));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cloth.cols));
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.cloth.spacing)));
    out.push_back(t.reached ? 1 : 0);
    for (float x : t.positions) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw SimError("cannot write task file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<Task> load_tasks(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SimError("cannot open task file " + path.string());
  ByteReader r(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()),
               "task file " + path.string());
  if (r.raw(4) != std::string(kTaskMagic, 4)) throw SimError("bad task file magic in " + path.string());
  if (r.le<std::uint32_t>() != kTaskVersion) throw SimError("unsupported task file version");
  const auto count = r.le<std::uint32_t>();
  std::vector<Task> tasks;
  tasks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Task t;
    t.seed = r.le<std::uint64_t>();
    t.cloth.rows = static_cast<int>(r.le<std::uint32_t>());
    t.cloth.cols = static_cast<int>(r.le<std::uint32_t>());
    t.cloth.spacing = std::bit_cast<float>(r.le<std::uint32_t>());
    t.reached = r.le<std::uint8_t>() != 0;
    const std::size_t n = static_cast<std::size_t>(t.cloth.rows) * t.cloth.cols * 3;
    if (n > 3u * 1024u * 1024u) throw SimError("implausible task mesh size");
    t.positions.resize(n);
    for (auto& x : t.positions) x = std::bit_cast<float>(r.le<std::uint32_t>());
    tasks.push_back(std::move(t));
  }
  if (!r.done()) throw SimError("trailing bytes in task file " + path.string());
  return tasks;
}

}  // namespace unfold
