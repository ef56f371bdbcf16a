#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "octaseg/network.hpp"

namespace octaseg {

namespace {

constexpr char kMagic[4] = {'I', 'M', 'N', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) raise(ErrorCode::TruncatedFile, "checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = uint32_t(uint8_t(buf[pos])) | uint32_t(uint8_t(buf[pos + 1])) << 8 |
                 uint32_t(uint8_t(buf[pos + 2])) << 16 |
                 uint32_t(uint8_t(buf[pos + 3])) << 24;
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string config_text(const ArchitectureConfig& c) {
  std::ostringstream os;
  os << "kind=" << arch_kind_name(c.kind) << "\n"
     << "depth=" << c.depth << "\n"
     << "width=" << c.width << "\n"
     << "in_channels=" << c.in_channels << "\n"
     << "num_classes=" << c.num_classes << "\n"
     << "bn_eps=" << fmt_double(c.bn_eps) << "\n"
     << "bn_momentum=" << fmt_double(c.bn_momentum) << "\n"
     << "seed=" << c.seed << "\n";
  return os.str();
}

ArchitectureConfig parse_config_text(const std::string& text) {
  ArchitectureConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorCode::ConfigInvalid, "bad checkpoint config line: " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "kind") c.kind = parse_arch_kind(val);
      else if (key == "depth") c.depth = std::stoi(val);
      else if (key == "width") c.width = std::stoi(val);
      else if (key == "in_channels") c.in_channels = std::stoi(val);
      else if (key == "num_classes") c.num_classes = std::stoi(val);
      else if (key == "bn_eps") c.bn_eps = std::stod(val);
      else if (key == "bn_momentum") c.bn_momentum = std::stod(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else raise(ErrorCode::ConfigInvalid, "unknown checkpoint config key: " + key);
    } catch (const std::invalid_argument&) {
      raise(ErrorCode::ConfigInvalid, "bad checkpoint config value: " + line);
    } catch (const std::out_of_range&) {
      raise(ErrorCode::ConfigInvalid, "bad checkpoint config value: " + line);
    }
  }
  return c;
}

void put_record(std::string& out, const std::string& name,
                const std::vector<uint32_t>& dims, const float* values, size_t n) {
  put_u32(out, uint32_t(name.size()));
  out.append(name);
  put_u32(out, uint32_t(dims.size()));
  for (uint32_t d : dims) put_u32(out, d);
  for (size_t i = 0; i < n; ++i) put_f32(out, values[i]);
}

struct Record {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> values;
};

Record read_record(Reader& r) {
  Record rec;
  rec.name = r.bytes(r.u32());
  const uint32_t dc = r.u32();
  size_t n = 1;
  for (uint32_t i = 0; i < dc; ++i) {
    rec.dims.push_back(r.u32());
    n *= rec.dims.back();
  }
  rec.values.resize(n);
  for (size_t i = 0; i < n; ++i) rec.values[i] = r.f32();
  return rec;
}

std::vector<uint32_t> tensor_dims(const Tensor<float>& t) {
  std::vector<uint32_t> d;
  for (int i = 0; i < t.rank(); ++i) d.push_back(uint32_t(t.dim(i)));
  return d;
}

void expect_record(const Record& rec, const std::string& name,
                   const std::vector<uint32_t>& dims) {
  if (rec.name != name)
    raise(ErrorCode::NameMismatch,
          "checkpoint record '" + rec.name + "' where '" + name + "' expected");
  if (rec.dims != dims)
    raise(ErrorCode::ShapeMismatch, "checkpoint record '" + name + "' has wrong shape");
}

}  // namespace

void save_checkpoint(const Network<float>& net, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = config_text(net.config);
  put_u32(out, uint32_t(cfg.size()));
  out.append(cfg);

  const uint32_t n_records =
      uint32_t(net.params.size() * 4 + net.bn_states.size() * 2);
  put_u32(out, n_records);
  for (const Parameter<float>& p : net.params) {
    const std::vector<uint32_t> dims = tensor_dims(p.value);
    put_record(out, p.name, dims, p.value.values().data(), p.value.numel());
    put_record(out, p.name + ".adam_m", dims, p.adam_m.data(), p.adam_m.size());
    put_record(out, p.name + ".adam_v", dims, p.adam_v.data(), p.adam_v.size());
    const float t = float(p.step_count);
    put_record(out, p.name + ".adam_t", {1}, &t, 1);
  }
  for (size_t i = 0; i < net.bn_states.size(); ++i) {
    const BatchNormState<float>& st = net.bn_states[i];
    const std::vector<uint32_t> dims = {uint32_t(st.running_mean.size())};
    put_record(out, net.bn_names[i] + ".running_mean", dims, st.running_mean.data(),
               st.running_mean.size());
    put_record(out, net.bn_names[i] + ".running_var", dims, st.running_var.data(),
               st.running_var.size());
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::IoFailure, "cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) raise(ErrorCode::IoFailure, "write failed: " + path);
}

Network<float> load_checkpoint(const std::string& path,
                               const ArchitectureConfig* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::FileMissing, "cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  Reader r{buf};

  if (r.bytes(4) != std::string(kMagic, 4))
    raise(ErrorCode::VersionMismatch, "not a recognized checkpoint: " + path);
  const uint32_t version = r.u32();
  if (version != kVersion)
    raise(ErrorCode::VersionMismatch,
          "checkpoint format version " + std::to_string(version) + ", expected " +
              std::to_string(kVersion));
  const ArchitectureConfig cfg = parse_config_text(r.bytes(r.u32()));
  if (expected) {
    if (cfg.kind != expected->kind || cfg.depth != expected->depth ||
        cfg.width != expected->width || cfg.in_channels != expected->in_channels ||
        cfg.num_classes != expected->num_classes)
      raise(ErrorCode::ConfigInvalid,
            "checkpoint architecture does not match the expected configuration");
  }

  Network<float> net = build_network<float>(cfg);
  const uint32_t n_records = r.u32();
  const uint32_t n_expected =
      uint32_t(net.params.size() * 4 + net.bn_states.size() * 2);
  if (n_records != n_expected)
    raise(ErrorCode::CorruptHeader, "checkpoint record count mismatch");

  for (Parameter<float>& p : net.params) {
    const std::vector<uint32_t> dims = tensor_dims(p.value);
    Record rec = read_record(r);
    expect_record(rec, p.name, dims);
    p.value.values() = rec.values;
    rec = read_record(r);
    expect_record(rec, p.name + ".adam_m", dims);
    p.adam_m = rec.values;
    rec = read_record(r);
    expect_record(rec, p.name + ".adam_v", dims);
    p.adam_v = rec.values;
    rec = read_record(r);
    expect_record(rec, p.name + ".adam_t", {1});
    p.step_count = int64_t(std::llround(double(rec.values[0])));
  }
  for (size_t i = 0; i < net.bn_states.size(); ++i) {
    BatchNormState<float>& st = net.bn_states[i];
    const std::vector<uint32_t> dims = {uint32_t(st.running_mean.size())};
    Record rec = read_record(r);
    expect_record(rec, net.bn_names[i] + ".running_mean", dims);
    st.running_mean = rec.values;
    rec = read_record(r);
    expect_record(rec, net.bn_names[i] + ".running_var", dims);
    st.running_var = rec.values;
  }
  return net;
}

}  // namespace octaseg
