#include "bidshade/model_file.hpp"

#include <bit>
#include <cstdio>
#include <algorithm>
#include <cstring>
#include <fstream>

#include "bidshade/hash.hpp"
#include "json.hpp"

namespace bidshade {

static_assert(std::endian::native == std::endian::little, "model files are written in host order; host must be LE");

namespace {

using nlohmann::json;
using Reason = ModelFormatError::Reason;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  void put_f32_array(const std::vector<double>& xs) {
    const std::size_t at = buf_.size();
    buf_.resize(at + xs.size() * sizeof(float));
    auto* out = buf_.data() + at;
    for (double x : xs) {
      const float f = static_cast<float>(x);
      std::memcpy(out, &f, sizeof(float));
      out += sizeof(float);
    }
  }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_bytes(get<std::uint32_t>()); }
  void get_f32_array(std::vector<double>& out, std::size_t n) {
    need(n * sizeof(float));
    out.resize(n);
    const auto* in = bytes_.data() + pos_;
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, in + i * sizeof(float), sizeof(float));
      out[i] = static_cast<double>(f);
    }
    pos_ += n * sizeof(float);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ModelFormatError(Reason::Truncated, "model file is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string field_order_string() {
  std::string s;
  for (std::size_t i = 0; i < kNumFields; ++i) {
    if (i) s.push_back(',');
    s.append(field_names()[i]);
  }
  return s;
}

json metadata_json(const TrainingMetadata& m) {
  return {{"seed", m.seed}, {"gamma", m.gamma}, {"epochs", m.epochs}, {"train_window", m.train_window}};
}

json baseline_config_json(const BaselineConfig& c) {
  return {{"forgetting", c.forgetting},
          {"u1_step", c.u1_step},
          {"u2_step", c.u2_step},
          {"grid_radius", c.grid_radius},
          {"batch_size", c.batch_size},
          {"capacity", c.capacity},
          {"cold_start", {{"u1", c.cold_start.u1}, {"u2", c.cold_start.u2}, {"b1", c.cold_start.b1}, {"rls_p", c.cold_start.rls_p}}}};
}

// Header up to and including the metadata block; the payload and checksum follow.
void write_header(Writer& w, ModelKind kind, const EncoderConfig& enc, std::uint32_t k, const json& meta) {
  w.put_bytes(std::string_view(kModelMagic, sizeof(kModelMagic)));
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kind));
  w.put<std::uint64_t>(enc.hash_seed);
  w.put<std::uint32_t>(enc.bits_per_field);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kNumFields));
  w.put<std::uint32_t>(k);
  w.put_string(field_order_string());
  w.put_string(meta.dump());
}

std::vector<std::uint8_t> finish(Writer& w, std::size_t payload_len_at) {
  const std::uint64_t payload_len = w.size() - payload_len_at - sizeof(std::uint64_t);
  std::memcpy(w.bytes().data() + payload_len_at, &payload_len, sizeof(payload_len));
  const std::uint64_t checksum = fnv1a64(w.bytes());
  w.put<std::uint64_t>(checksum);
  return std::move(w.bytes());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelFormatError(Reason::Io, "cannot open for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelFormatError(Reason::Io, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ModelFormatError(Reason::Io, "cannot rename into " + path);
}

TrainingMetadata parse_metadata(const json& j) {
  TrainingMetadata m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.gamma = j.value("gamma", 0.0);
  m.epochs = j.value("epochs", std::uint32_t{0});
  m.train_window = j.value("train_window", std::string{});
  return m;
}

BaselineConfig parse_baseline_config(const json& j) {
  BaselineConfig c;
  c.forgetting = j.value("forgetting", c.forgetting);
  c.u1_step = j.value("u1_step", c.u1_step);
  c.u2_step = j.value("u2_step", c.u2_step);
  c.grid_radius = j.value("grid_radius", c.grid_radius);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.capacity = j.value("capacity", c.capacity);
  if (j.contains("cold_start")) {
    const auto& cs = j["cold_start"];
    c.cold_start.u1 = cs.value("u1", c.cold_start.u1);
    c.cold_start.u2 = cs.value("u2", c.cold_start.u2);
    c.cold_start.b1 = cs.value("b1", c.cold_start.b1);
    c.cold_start.rls_p = cs.value("rls_p", c.cold_start.rls_p);
  }
  return c;
}

}  // namespace

std::string LoadedModel::version_tag() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s-%012llx", std::string(to_string(kind)).c_str(),
                static_cast<unsigned long long>(checksum & 0xFFFF'FFFF'FFFFULL));
  return buf;
}

std::vector<std::uint8_t> serialize_model(const ShadingModel& model) {
  Writer w;
  const ModelKind kind = kind_of(model);
  const auto* fm = std::get_if<FmModel>(&model);
  const auto& meta = std::visit([](const auto& m) -> const TrainingMetadata& { return m.metadata; }, model);
  write_header(w, kind, encoder_of(model), fm ? fm->k : 0, metadata_json(meta));
  const std::size_t len_at = w.size();
  w.put<std::uint64_t>(0);
  std::visit(
      [&w](const auto& m) {
        w.put<float>(static_cast<float>(m.w0));
        w.put_f32_array(m.w);
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FmModel>) w.put_f32_array(m.v);
      },
      model);
  return finish(w, len_at);
}

std::vector<std::uint8_t> serialize_segment_store(const SegmentStore& store, const TrainingMetadata& metadata) {
  Writer w;
  json meta = metadata_json(metadata);
  meta["baseline"] = baseline_config_json(store.config());
  write_header(w, ModelKind::Segmented, EncoderConfig{}, 0, meta);
  const std::size_t len_at = w.size();
  w.put<std::uint64_t>(0);
  const auto entries = store.entries();
  w.put<std::uint64_t>(entries.size());
  for (const auto& [key, p] : entries) {
    w.put_string(key.exchange);
    w.put_string(key.page_tld);
    w.put_string(key.device_type_id);
    w.put_string(key.layout_id);
    w.put<float>(static_cast<float>(p.u1));
    w.put<float>(static_cast<float>(p.u2));
    w.put<float>(static_cast<float>(p.b1));
    w.put<float>(static_cast<float>(p.rls_p));
    w.put<std::uint64_t>(p.observations);
    w.put<std::int64_t>(p.last_update_ms);
  }
  return finish(w, len_at);
}

LoadedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_len = std::min(bytes.size(), sizeof(kModelMagic));
  if (std::memcmp(bytes.data(), kModelMagic, magic_len) != 0) {
    throw ModelFormatError(Reason::BadMagic, "not a bidshade model file (bad magic)");
  }
  if (bytes.size() < sizeof(kModelMagic) + sizeof(std::uint32_t)) {
    throw ModelFormatError(Reason::Truncated, "model file is truncated");
  }
  Reader r(bytes);
  r.get_bytes(sizeof(kModelMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw ModelFormatError(Reason::UnsupportedVersion, "unsupported model format version " + std::to_string(version) +
                                                           " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  if (bytes.size() < sizeof(std::uint64_t) * 2) throw ModelFormatError(Reason::Truncated, "model file is truncated");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  const std::uint64_t actual = fnv1a64(bytes.first(body));
  if (stored != actual) throw ModelFormatError(Reason::ChecksumMismatch, "model file checksum mismatch");

  LoadedModel out;
  out.checksum = actual;
  const auto kind_raw = r.get<std::uint32_t>();
  if (kind_raw > static_cast<std::uint32_t>(ModelKind::Segmented)) {
    throw ModelFormatError(Reason::Invalid, "unknown model kind " + std::to_string(kind_raw));
  }
  out.kind = static_cast<ModelKind>(kind_raw);
  EncoderConfig enc;
  enc.hash_seed = r.get<std::uint64_t>();
  enc.bits_per_field = r.get<std::uint32_t>();
  const auto field_count = r.get<std::uint32_t>();
  const auto k = r.get<std::uint32_t>();
  const std::string order = r.get_string();
  if (field_count != kNumFields || order != field_order_string()) {
    throw ModelFormatError(Reason::Invalid, "model field schema does not match this build");
  }
  if (enc.bits_per_field < 1 || enc.bits_per_field > 28) throw ModelFormatError(Reason::Invalid, "bad encoder bits");

  json meta;
  try {
    meta = json::parse(r.get_string());
  } catch (const json::exception&) {
    throw ModelFormatError(Reason::Invalid, "model metadata is not valid JSON");
  }
  out.metadata = parse_metadata(meta);
  const auto payload_len = r.get<std::uint64_t>();
  if (payload_len != r.remaining() - sizeof(std::uint64_t)) {
    throw ModelFormatError(Reason::Invalid, "payload length does not match file size");
  }

  const std::size_t n = enc.total_space();
  switch (out.kind) {
    case ModelKind::Linear: {
      if (payload_len != (1 + n) * sizeof(float)) throw ModelFormatError(Reason::Invalid, "linear payload size mismatch");
      LinearModel m;
      m.encoder = enc;
      m.metadata = out.metadata;
      m.w0 = static_cast<double>(r.get<float>());
      r.get_f32_array(m.w, n);
      out.model = std::move(m);
      break;
    }
    case ModelKind::Fm: {
      if (k < 1 || payload_len != (1 + n + n * k) * sizeof(float)) {
        throw ModelFormatError(Reason::Invalid, "fm payload size mismatch");
      }
      FmModel m;
      m.encoder = enc;
      m.k = k;
      m.metadata = out.metadata;
      m.w0 = static_cast<double>(r.get<float>());
      r.get_f32_array(m.w, n);
      r.get_f32_array(m.v, n * k);
      out.model = std::move(m);
      break;
    }
    case ModelKind::Segmented: {
      BaselineConfig cfg = meta.contains("baseline") ? parse_baseline_config(meta["baseline"]) : BaselineConfig{};
      try {
        validate(cfg);
      } catch (const std::invalid_argument& e) {
        throw ModelFormatError(Reason::Invalid, std::string("invalid baseline config: ") + e.what());
      }
      auto store = std::make_shared<SegmentStore>(cfg);
      const auto count = r.get<std::uint64_t>();
      for (std::uint64_t i = 0; i < count; ++i) {
        SegmentKey key;
        key.exchange = r.get_string();
        key.page_tld = r.get_string();
        key.device_type_id = r.get_string();
        key.layout_id = r.get_string();
        SegmentParams p;
        p.u1 = r.get<float>();
        p.u2 = r.get<float>();
        p.b1 = r.get<float>();
        p.rls_p = r.get<float>();
        p.observations = r.get<std::uint64_t>();
        p.last_update_ms = r.get<std::int64_t>();
        store->put(key, p);
      }
      out.store = std::move(store);
      break;
    }
  }
  if (r.remaining() != sizeof(std::uint64_t)) throw ModelFormatError(Reason::Invalid, "trailing bytes in payload");
  return out;
}

void save_model(const ShadingModel& model, const std::string& path) { write_file(path, serialize_model(model)); }

void save_segment_store(const SegmentStore& store, const std::string& path, const TrainingMetadata& metadata) {
  write_file(path, serialize_segment_store(store, metadata));
}

LoadedModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(Reason::Io, "cannot open model file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), size)) throw ModelFormatError(Reason::Io, "read failed: " + path);
  return deserialize_model(bytes);
}

ShadingModel load_model(const std::string& path) {
  LoadedModel m = load_model_file(path);
  if (!m.model) throw ModelFormatError(Reason::Invalid, path + " holds a segment store, not a linear/fm model");
  return std::move(*m.model);
}

SegmentStore load_segment_store(const std::string& path) {
  LoadedModel m = load_model_file(path);
  if (!m.store) throw ModelFormatError(Reason::Invalid, path + " holds a linear/fm model, not a segment store");
  return *m.store;
}

}  // namespace bidshade
