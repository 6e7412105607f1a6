#include <bit>
#include <stdexcept>

#include "unfold/pretrain.hpp"

namespace unfold {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

ReplayStore::ReplayStore(std::filesystem::path path, std::size_t capacity)
    : ReplayStore(std::move(path), capacity, true) {}

ReplayStore::ReplayStore(std::filesystem::path path, std::size_t capacity, bool truncate)
    : path_(std::move(path)), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("replay store capacity must be positive");
  auto mode = std::ios::binary | std::ios::in | std::ios::out;
  if (truncate) mode |= std::ios::trunc;
  file_.open(path_, mode);
  if (!file_) throw std::runtime_error("cannot open replay store " + path_.string());
}

ReplayStore ReplayStore::open(std::filesystem::path path, std::size_t capacity) {
  ReplayStore store(std::move(path), capacity, false);
  store.file_.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(store.file_.tellg());
  std::uint64_t pos = 0;
  unsigned char head[4];
  while (pos < size) {
    store.file_.seekg(static_cast<std::streamoff>(pos));
    if (size - pos < 4 || !store.file_.read(reinterpret_cast<char*>(head), 4))
      throw std::runtime_error("truncated record in replay store " + store.path_.string());
    const std::uint64_t next = pos + 4 + get_u32(head) + 8;
    if (next > size) throw std::runtime_error("truncated record in replay store " + store.path_.string());
    store.offsets_.push_back(pos);
    pos = next;
  }
  store.end_ = size;
  return store;
}

bool ReplayStore::append(const PretrainSample& sample) {
  if (offsets_.size() >= capacity_) {
    ++dropped_;
    return false;
  }
  std::string rec;
  rec.reserve(12 + 4 * sample.observation.size());
  put_u32(rec, static_cast<std::uint32_t>(4 * sample.observation.size()));
  for (float x : sample.observation) put_u32(rec, std::bit_cast<std::uint32_t>(x));
  put_u32(rec, sample.action);
  put_u32(rec, std::bit_cast<std::uint32_t>(sample.label));
  file_.clear();
  file_.seekp(static_cast<std::streamoff>(end_));
  file_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  file_.flush();
  if (!file_) throw std::runtime_error("failed writing replay store " + path_.string());
  offsets_.push_back(end_);
  end_ += rec.size();
  return true;
}

PretrainSample ReplayStore::get(std::size_t i) {
  if (i >= offsets_.size()) throw std::out_of_range("replay record index out of range");
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(offsets_[i]));
  unsigned char head[4];
  file_.read(reinterpret_cast<char*>(head), 4);
  const std::uint32_t bytes = get_u32(head);
  std::vector<unsigned char> buf(bytes + 8u);
  file_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!file_) throw std::runtime_error("failed reading replay store " + path_.string());
  PretrainSample s;
  s.observation.resize(bytes / 4);
  for (std::size_t k = 0; k < s.observation.size(); ++k)
    s.observation[k] = std::bit_cast<float>(get_u32(buf.data() + 4 * k));
  s.action = get_u32(buf.data() + bytes);
  s.label = std::bit_cast<float>(get_u32(buf.data() + bytes + 4));
  return s;
}

std::vector<PretrainSample> ReplayStore::sample(std::size_t count, Rng& rng) {
  if (offsets_.empty()) throw std::runtime_error("cannot sample from an empty replay store");
  std::vector<PretrainSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(get(rng.below(offsets_.size())));
  return out;
}

}  // namespace unfold
