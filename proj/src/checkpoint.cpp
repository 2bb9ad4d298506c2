#include "fedfmc/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>

#include "fedfmc/errors.hpp"

namespace fedfmc {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'M', 'C', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  const unsigned char* take(std::size_t n) {
    if (n > buf_.size() - pos_) throw CheckpointError("checkpoint is truncated");
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  Vector vec(std::uint64_t n) {
    if (n > (buf_.size() - pos_) / 8) throw CheckpointError("checkpoint is truncated");
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  /// Guards counts before allocating for them.
  std::uint32_t count(std::size_t min_bytes_each) {
    const std::uint32_t n = u32();
    if (min_bytes_each && n > (buf_.size() - pos_) / min_bytes_each)
      throw CheckpointError("checkpoint is truncated");
    return n;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const ModelParams& m = ckpt.model;
  if (m.size() != parameter_count(m.layer_dims))
    throw CheckpointError("model values do not match layer_dims");
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(m.layer_dims.size()));
  for (int d : m.layer_dims) w.i32(d);
  w.u64(static_cast<std::uint64_t>(m.size()));
  w.vec(m.values);
  w.i32(ckpt.round);
  w.i32(ckpt.next_group_id);
  w.u32(static_cast<std::uint32_t>(ckpt.groups.size()));
  for (const auto& g : ckpt.groups) {
    if (g.values.size() != m.size()) throw CheckpointError("group model layout differs");
    w.i32(g.id);
    w.i32(g.created_round);
    w.u32(static_cast<std::uint32_t>(g.members.size()));
    for (int id : g.members) w.i32(id);
    w.vec(g.values);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.ledger.size()));
  for (const auto& e : ckpt.ledger) {
    w.i32(e.round);
    w.u8(static_cast<std::uint8_t>(e.phase));
    w.i64(e.updates_delta);
    w.i64(e.transfers_delta);
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.data().size()));
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));

  if (std::memcmp(r.take(4), kMagic.data(), 4) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  if (const auto version = r.u32(); version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));

  Checkpoint ckpt;
  std::vector<int> dims(r.count(4));
  for (int& d : dims) d = r.i32();
  if (dims.size() < 2 || std::any_of(dims.begin(), dims.end(), [](int d) { return d < 1; }))
    throw CheckpointError("checkpoint has invalid layer_dims");
  const std::uint64_t n = r.u64();
  if (n != static_cast<std::uint64_t>(parameter_count(dims)))
    throw CheckpointError("checkpoint parameter count does not match layer_dims");
  ckpt.model = ModelParams(dims, r.vec(n));
  ckpt.round = r.i32();
  ckpt.next_group_id = r.i32();
  ckpt.groups.resize(r.count(12));
  for (auto& g : ckpt.groups) {
    g.id = r.i32();
    g.created_round = r.i32();
    g.members.resize(r.count(4));
    for (int& id : g.members) id = r.i32();
    g.values = r.vec(n);
  }
  ckpt.ledger.resize(r.count(21));
  for (auto& e : ckpt.ledger) {
    e.round = r.i32();
    const std::uint8_t phase = r.u8();
    if (phase > static_cast<std::uint8_t>(Phase::kMerge))
      throw CheckpointError("checkpoint ledger has unknown phase");
    e.phase = static_cast<Phase>(phase);
    e.updates_delta = r.i64();
    e.transfers_delta = r.i64();
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

Checkpoint snapshot(const FederationState& state, const ModelParams& model) {
  Checkpoint ckpt;
  ckpt.model = model;
  ckpt.round = state.round;
  ckpt.next_group_id = state.groups.next_id();
  for (const auto& [id, g] : state.groups) {
    if (!g.model.same_layout(model)) throw CheckpointError("group model layout differs");
    ckpt.groups.push_back({id, g.created_round, g.members, g.model.values});
  }
  ckpt.ledger = state.ledger.per_round();
  return ckpt;
}

void restore_into(const Checkpoint& ckpt, FederationState& state) {
  GroupTable table;
  std::vector<int> owner(state.devices.size(), -1);
  for (const auto& g : ckpt.groups) {
    for (int id : g.members) {
      if (id < 0 || static_cast<std::size_t>(id) >= owner.size() || owner[static_cast<std::size_t>(id)] != -1)
        throw CheckpointError("checkpoint group table does not match the devices");
      owner[static_cast<std::size_t>(id)] = g.id;
    }
    table.insert(g.id, Group{g.members, ModelParams(ckpt.model.layer_dims, g.values), g.created_round});
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end())
    throw CheckpointError("checkpoint leaves devices without a group");
  table.set_next_id(std::max(table.next_id(), ckpt.next_group_id));

  state.groups = std::move(table);
  for (auto& d : state.devices) {
    d.group_id = owner[static_cast<std::size_t>(d.device_id)];
    d.current_model = state.groups.at(d.group_id).model;
  }
  state.round = ckpt.round;
  state.ledger = CostLedger::from_entries(ckpt.ledger);
}

}  // namespace fedfmc
