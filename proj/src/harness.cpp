#include "hct/harness.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <climits>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hct/common.hpp"

namespace fs = std::filesystem;

namespace hct {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(clamp01(v) * 255.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<Sample> synth_dataset(std::uint64_t seed, int n, int size) {
  if (n < 1) {
    throw ConfigError("synth_dataset: need at least one sample, got " + std::to_string(n));
  }
  if (size < 16 || size % 16 != 0) {
    throw ConfigError("synth_dataset: size must be a positive multiple of 16, got " +
                      std::to_string(size));
  }
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
    Sample s;
    s.rgb = Tensor::zeros({size, size, 3});
    s.depth = Tensor::zeros({size, size, 1});
    s.gt = Tensor::zeros({size, size});

    // Background: smooth per-channel gradients with fine noise on top. The
    // depth plane stays above 0.49 everywhere so every object depth below
    // 0.45 is separated from it.
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) base[c] = rng.uniform(0.15, 0.85);
    for (int c = 0; c < 3; ++c) {
      gx[c] = rng.uniform(-0.3, 0.3);
      gy[c] = rng.uniform(-0.3, 0.3);
    }
    const double noise = rng.uniform(0.02, 0.08);
    const double dbase = rng.uniform(0.65, 0.95);
    const double dgx = rng.uniform(-0.15, 0.15);
    const double dgy = rng.uniform(-0.15, 0.15);
    const double dnoise = rng.uniform(0.005, 0.02);
    for (int y = 0; y < size; ++y) {
      const double fy = static_cast<double>(y) / (size - 1);
      for (int x = 0; x < size; ++x) {
        const double fx = static_cast<double>(x) / (size - 1);
        for (int c = 0; c < 3; ++c) {
          const double v =
              base[c] + gx[c] * (fx - 0.5) + gy[c] * (fy - 0.5) + noise * (rng.uniform() - 0.5);
          s.rgb.at(y, x, c) = clamp01(v);
        }
        const double d =
            dbase + dgx * (fx - 0.5) + dgy * (fy - 0.5) + dnoise * (rng.uniform() - 0.5);
        s.depth.at(y, x, 0) = clamp01(d);
      }
    }

    // One to three filled shapes. Half extents of at least two pixels and
    // centers inside [0.2, 0.8] of the frame keep every shape partly
    // visible, and the area bound (three shapes cover at most ~58% of the
    // frame) keeps some background visible too.
    const int shapes = 1 + rng.uniform_int(3);
    for (int k = 0; k < shapes; ++k) {
      const bool ellipse = rng.uniform_int(2) == 1;
      const double cx = rng.uniform(0.2, 0.8) * size;
      const double cy = rng.uniform(0.2, 0.8) * size;
      const double ax = std::max(2.0, rng.uniform(0.08, 0.22) * size);
      const double ay = std::max(2.0, rng.uniform(0.08, 0.22) * size);
      double col[3];
      for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.05, 0.95);
      const double obj_depth = rng.uniform(0.1, 0.45);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double dx = (x + 0.5 - cx) / ax;
          const double dy = (y + 0.5 - cy) / ay;
          const bool inside = ellipse ? (dx * dx + dy * dy <= 1.0)
                                      : (std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0);
          if (!inside) continue;
          for (int c = 0; c < 3; ++c) s.rgb.at(y, x, c) = col[c];
          s.depth.at(y, x, 0) = obj_depth;
          s.gt.at(y, x) = 1.0;
        }
      }
    }

    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "s%05d", i);
    s.id = idbuf;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image files

namespace {

void write_pnm(const std::string& path, const std::string& magic, int h, int w,
               const std::vector<unsigned char>& bytes) {
  std::ofstream ofs(path, std::ios::binary | std::ios::trunc);
  if (!ofs) throw IoError(path + ": cannot open for writing");
  ofs << magic << "\n" << w << " " << h << "\n255\n";
  ofs.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!ofs) throw IoError(path + ": write failed");
}

std::string next_header_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF && (std::isspace(c) != 0 || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      if (c == EOF) break;
    }
    c = in.get();
  }
  if (c == EOF) throw IoError(path + ": truncated header");
  std::string tok;
  while (c != EOF && std::isspace(c) == 0) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c == EOF) throw IoError(path + ": truncated header");
  return tok;
}

int header_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = next_header_token(in, path);
  if (tok.empty() || tok.size() > 9 ||
      !std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    throw IoError(path + ": malformed " + what + " '" + tok + "'");
  }
  return std::stoi(tok);
}

std::vector<unsigned char> read_pnm(const std::string& path, const std::string& want_magic,
                                    int channels, int& h, int& w) {
  std::ifstream ifs(path, std::ios::binary);
  if (!ifs) throw IoError(path + ": cannot open for reading");
  char m[2] = {0, 0};
  ifs.read(m, 2);
  if (ifs.gcount() != 2 || std::string(m, 2) != want_magic) {
    throw IoError(path + ": bad magic bytes, expected " + want_magic);
  }
  w = header_int(ifs, path, "width");
  h = header_int(ifs, path, "height");
  if (w <= 0 || h <= 0) throw IoError(path + ": degenerate extents");
  const int maxval = header_int(ifs, path, "maxval");
  if (maxval != 255) {
    throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
  }
  const std::size_t count =
      static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(channels);
  std::vector<unsigned char> bytes(count);
  ifs.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(ifs.gcount()) != count) {
    throw IoError(path + ": truncated pixel data");
  }
  return bytes;
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& map) {
  const bool rank2 = map.ndim() == 2;
  const bool rank3 = map.ndim() == 3 && map.dim(2) == 1;
  if (!rank2 && !rank3) {
    throw ShapeError("write_pgm: expected [h, w] or [h, w, 1], got " + shape_str(map.shape));
  }
  const int h = map.dim(0);
  const int w = map.dim(1);
  std::vector<unsigned char> bytes(map.data.size());
  for (std::size_t i = 0; i < map.data.size(); ++i) bytes[i] = to_byte(map.data[i]);
  write_pnm(path, "P5", h, w, bytes);
}

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(2) != 3) {
    throw ShapeError("write_ppm: expected [h, w, 3], got " + shape_str(rgb.shape));
  }
  std::vector<unsigned char> bytes(rgb.data.size());
  for (std::size_t i = 0; i < rgb.data.size(); ++i) bytes[i] = to_byte(rgb.data[i]);
  write_pnm(path, "P6", rgb.dim(0), rgb.dim(1), bytes);
}

Tensor read_pgm(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<unsigned char> bytes = read_pnm(path, "P5", 1, h, w);
  Tensor t = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) t.data[i] = bytes[i] / 255.0;
  return t;
}

Tensor read_ppm(const std::string& path) {
  int h = 0, w = 0;
  const std::vector<unsigned char> bytes = read_pnm(path, "P6", 3, h, w);
  Tensor t = Tensor::zeros({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) t.data[i] = bytes[i] / 255.0;
  return t;
}

// ---------------------------------------------------------------------------
// Dataset directories

void save_dataset(const std::string& root, const std::vector<Sample>& data) {
  fs::create_directories(root);
  std::set<std::string> seen;
  for (const Sample& s : data) {
    if (s.id.empty()) throw Error("save_dataset: a sample has an empty id");
    for (unsigned char c : s.id) {
      if (std::isalnum(c) == 0 && c != '_' && c != '-') {
        throw Error("save_dataset: id '" + s.id + "' is not file-name safe");
      }
    }
    if (!seen.insert(s.id).second) throw Error("save_dataset: duplicate id '" + s.id + "'");
    if (s.rgb.ndim() != 3 || s.rgb.dim(2) != 3 || s.depth.ndim() != 3 || s.depth.dim(2) != 1 ||
        s.gt.ndim() != 2 || s.depth.dim(0) != s.rgb.dim(0) || s.depth.dim(1) != s.rgb.dim(1) ||
        s.gt.dim(0) != s.rgb.dim(0) || s.gt.dim(1) != s.rgb.dim(1)) {
      throw ShapeError("save_dataset: sample '" + s.id + "' mixes extents: rgb " +
                       shape_str(s.rgb.shape) + ", depth " + shape_str(s.depth.shape) + ", gt " +
                       shape_str(s.gt.shape));
    }
    write_ppm((fs::path(root) / (s.id + "_rgb.ppm")).string(), s.rgb);
    write_pgm((fs::path(root) / (s.id + "_depth.pgm")).string(), s.depth);
    write_pgm((fs::path(root) / (s.id + "_gt.pgm")).string(), s.gt);
  }
  const std::string index_path = (fs::path(root) / "index.txt").string();
  std::ofstream idx(index_path, std::ios::trunc);
  if (!idx) throw IoError(index_path + ": cannot open for writing");
  for (const Sample& s : data) idx << s.id << "\n";
  if (!idx) throw IoError(index_path + ": write failed");
}

std::vector<Sample> load_dataset(const std::string& root) {
  const std::string index_path = (fs::path(root) / "index.txt").string();
  std::ifstream idx(index_path);
  if (!idx) throw IoError(index_path + ": cannot open for reading");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(idx, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen.insert(line).second) throw IoError(index_path + ": duplicate id '" + line + "'");
    ids.push_back(line);
  }
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    Sample s;
    s.id = id;
    s.rgb = read_ppm((fs::path(root) / (id + "_rgb.ppm")).string());
    Tensor depth = read_pgm((fs::path(root) / (id + "_depth.pgm")).string());
    Tensor gt = read_pgm((fs::path(root) / (id + "_gt.pgm")).string());
    if (depth.dim(0) != s.rgb.dim(0) || depth.dim(1) != s.rgb.dim(1) ||
        gt.dim(0) != s.rgb.dim(0) || gt.dim(1) != s.rgb.dim(1)) {
      throw ShapeError("load_dataset: sample '" + id + "' mixes extents: rgb " +
                       shape_str(s.rgb.shape) + ", depth " + shape_str(depth.shape) + ", gt " +
                       shape_str(gt.shape));
    }
    depth.shape = {depth.dim(0), depth.dim(1), 1};
    for (double& v : gt.data) v = v >= 0.5 ? 1.0 : 0.0;
    s.depth = std::move(depth);
    s.gt = std::move(gt);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'H', 'C', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

struct ByteReader {
  const std::string& buf;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError(path + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + k])) << (8 * k);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + k])) << (8 * k);
    }
    pos += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& ps) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  const std::string conf = format_model_config(cfg);
  put_u64(buf, conf.size());
  buf += conf;
  put_u64(buf, ps.count());
  for (const auto& [name, t] : ps.items()) {
    put_u64(buf, name.size());
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_u64(buf, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream ofs(path, std::ios::binary | std::ios::trunc);
  if (!ofs) throw IoError(path + ": cannot open for writing");
  ofs.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!ofs) throw IoError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream ifs(path, std::ios::binary);
  if (!ifs) throw IoError(path + ": cannot open for reading");
  std::ostringstream raw;
  raw << ifs.rdbuf();
  const std::string buf = raw.str();
  ByteReader r{buf, path};

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw IoError(path + ": not a checkpoint (bad magic bytes)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t conf_len = r.u64();
  if (conf_len > buf.size()) throw IoError(path + ": truncated checkpoint");
  const std::string conf = r.bytes(static_cast<std::size_t>(conf_len));

  Checkpoint ck;
  try {
    ck.config = parse_model_config(conf);
  } catch (const ConfigError& e) {
    throw IoError(path + ": bad config snapshot: " + e.what());
  }

  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64();
    if (name_len == 0 || name_len > 4096) {
      throw IoError(path + ": corrupt checkpoint (parameter name length)");
    }
    const std::string name = r.bytes(static_cast<std::size_t>(name_len));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 16) {
      throw IoError(path + ": corrupt checkpoint (parameter rank " + std::to_string(rank) + ")");
    }
    std::vector<int> shape(rank);
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t ext = r.u32();
      if (ext == 0 || ext > (1u << 24)) {
        throw IoError(path + ": corrupt checkpoint (parameter extent)");
      }
      shape[d] = static_cast<int>(ext);
      numel *= ext;
      if (numel > (1ull << 33)) throw IoError(path + ": corrupt checkpoint (parameter size)");
    }
    Tensor t = Tensor::zeros(shape);
    for (std::uint64_t j = 0; j < numel; ++j) {
      t.data[static_cast<std::size_t>(j)] = std::bit_cast<double>(r.u64());
    }
    if (ck.params.has(name)) {
      throw IoError(path + ": corrupt checkpoint (duplicate parameter '" + name + "')");
    }
    ck.params.add(name, std::move(t));
  }
  if (r.pos != buf.size()) {
    throw IoError(path + ": trailing bytes after checkpoint payload");
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expect) {
  Checkpoint ck = load_checkpoint(path);
  ParamStore ref;
  init_model(ref, expect);
  for (const auto& [name, t] : ref.items()) {
    if (!ck.params.has(name)) {
      throw Error(path + ": checkpoint is missing parameter '" + name + "'");
    }
    const Tensor& got = ck.params.at(name);
    if (got.shape != t.shape) {
      throw ShapeError(path + ": parameter '" + name + "' has shape " + shape_str(got.shape) +
                       " but the requested config needs " + shape_str(t.shape));
    }
  }
  for (const auto& [name, t] : ck.params.items()) {
    if (!ref.has(name)) throw Error(path + ": unknown parameter '" + name + "'");
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

struct ConfigLine {
  int no = 0;
  std::string key;
  std::string value;
};

std::string line_tag(const ConfigLine& ln) { return "config line " + std::to_string(ln.no); }

int parse_int_value(const ConfigLine& ln) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(ln.value, &used);
    if (used != ln.value.size()) throw std::invalid_argument("trailing");
    if (v < INT_MIN || v > INT_MAX) throw std::out_of_range("range");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError(line_tag(ln) + ": key '" + ln.key + "' expects an integer, got '" +
                      ln.value + "'");
  }
}

std::uint64_t parse_u64_value(const ConfigLine& ln) {
  try {
    if (!ln.value.empty() && ln.value[0] == '-') throw std::invalid_argument("sign");
    std::size_t used = 0;
    const unsigned long long v = std::stoull(ln.value, &used);
    if (used != ln.value.size()) throw std::invalid_argument("trailing");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(line_tag(ln) + ": key '" + ln.key +
                      "' expects a nonnegative integer, got '" + ln.value + "'");
  }
}

double parse_double_value(const ConfigLine& ln) {
  try {
    std::size_t used = 0;
    const double v = std::stod(ln.value, &used);
    if (used != ln.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(line_tag(ln) + ": key '" + ln.key + "' expects a number, got '" + ln.value +
                      "'");
  }
}

bool parse_bool_value(const ConfigLine& ln) {
  if (ln.value == "1" || ln.value == "true") return true;
  if (ln.value == "0" || ln.value == "false") return false;
  throw ConfigError(line_tag(ln) + ": key '" + ln.key + "' expects 0/1/true/false, got '" +
                    ln.value + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a])) != 0) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])) != 0) --b;
  return s.substr(a, b - a);
}

using Setter = std::function<void(const ConfigLine&)>;

void apply_config(const std::string& text, const std::map<std::string, Setter>& setters) {
  std::istringstream in(text);
  std::string raw;
  std::set<std::string> seen;
  int no = 0;
  while (std::getline(in, raw)) {
    ++no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string body = trim(raw);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(no) + ": expected key=value, got '" +
                        body + "'");
    }
    ConfigLine ln;
    ln.no = no;
    ln.key = trim(body.substr(0, eq));
    ln.value = trim(body.substr(eq + 1));
    if (ln.key.empty()) {
      throw ConfigError(line_tag(ln) + ": empty key");
    }
    const auto it = setters.find(ln.key);
    if (it == setters.end()) {
      throw ConfigError(line_tag(ln) + ": unknown key '" + ln.key + "'");
    }
    if (!seen.insert(ln.key).second) {
      throw ConfigError(line_tag(ln) + ": duplicate key '" + ln.key + "'");
    }
    it->second(ln);
  }
}

std::map<std::string, Setter> model_setters(ModelConfig& m) {
  return {
      {"input", [&m](const ConfigLine& ln) { m.input = parse_int_value(ln); }},
      {"rgb_channels", [&m](const ConfigLine& ln) { m.rgb_channels = parse_int_value(ln); }},
      {"depth_channels", [&m](const ConfigLine& ln) { m.depth_channels = parse_int_value(ln); }},
      {"c_s", [&m](const ConfigLine& ln) { m.c_s = parse_int_value(ln); }},
      {"c_d", [&m](const ConfigLine& ln) { m.c_d = parse_int_value(ln); }},
      {"heads", [&m](const ConfigLine& ln) { m.heads = parse_int_value(ln); }},
      {"enc_blocks", [&m](const ConfigLine& ln) { m.enc_blocks = parse_int_value(ln); }},
      {"mlp_ratio", [&m](const ConfigLine& ln) { m.mlp_ratio = parse_int_value(ln); }},
      {"lca_radius", [&m](const ConfigLine& ln) { m.lca_radius = parse_int_value(ln); }},
      {"dcm_kernel", [&m](const ConfigLine& ln) { m.dcm_kernel = parse_int_value(ln); }},
      {"ln_eps", [&m](const ConfigLine& ln) { m.ln_eps = parse_double_value(ln); }},
      {"seed", [&m](const ConfigLine& ln) { m.seed = parse_u64_value(ln); }},
  };
}

void add_run_setters(std::map<std::string, Setter>& setters, RunConfig& cfg) {
  setters.emplace("batch_size",
                  [&cfg](const ConfigLine& ln) { cfg.train.batch_size = parse_int_value(ln); });
  setters.emplace("epochs",
                  [&cfg](const ConfigLine& ln) { cfg.train.epochs = parse_int_value(ln); });
  setters.emplace("lr_start",
                  [&cfg](const ConfigLine& ln) { cfg.train.lr_start = parse_double_value(ln); });
  setters.emplace("lr_end",
                  [&cfg](const ConfigLine& ln) { cfg.train.lr_end = parse_double_value(ln); });
  setters.emplace("beta1",
                  [&cfg](const ConfigLine& ln) { cfg.train.beta1 = parse_double_value(ln); });
  setters.emplace("beta2",
                  [&cfg](const ConfigLine& ln) { cfg.train.beta2 = parse_double_value(ln); });
  setters.emplace("adam_eps",
                  [&cfg](const ConfigLine& ln) { cfg.train.eps = parse_double_value(ln); });
  setters.emplace("train_seed",
                  [&cfg](const ConfigLine& ln) { cfg.train.seed = parse_u64_value(ln); });
  setters.emplace("flip_augment",
                  [&cfg](const ConfigLine& ln) { cfg.train.flip_augment = parse_bool_value(ln); });
  setters.emplace("samples",
                  [&cfg](const ConfigLine& ln) { cfg.samples = parse_int_value(ln); });
  setters.emplace("data_seed",
                  [&cfg](const ConfigLine& ln) { cfg.data_seed = parse_u64_value(ln); });
}

std::string fmt_double(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, Setter> setters = model_setters(cfg.model);
  add_run_setters(setters, cfg);
  apply_config(text, setters);
  return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out = format_model_config(cfg.model);
  out += "batch_size=" + std::to_string(cfg.train.batch_size) + "\n";
  out += "epochs=" + std::to_string(cfg.train.epochs) + "\n";
  out += "lr_start=" + fmt_double(cfg.train.lr_start) + "\n";
  out += "lr_end=" + fmt_double(cfg.train.lr_end) + "\n";
  out += "beta1=" + fmt_double(cfg.train.beta1) + "\n";
  out += "beta2=" + fmt_double(cfg.train.beta2) + "\n";
  out += "adam_eps=" + fmt_double(cfg.train.eps) + "\n";
  out += "train_seed=" + std::to_string(cfg.train.seed) + "\n";
  out += std::string("flip_augment=") + (cfg.train.flip_augment ? "1" : "0") + "\n";
  out += "samples=" + std::to_string(cfg.samples) + "\n";
  out += "data_seed=" + std::to_string(cfg.data_seed) + "\n";
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  apply_config(text, model_setters(cfg));
  return cfg;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::string out;
  out += "input=" + std::to_string(cfg.input) + "\n";
  out += "rgb_channels=" + std::to_string(cfg.rgb_channels) + "\n";
  out += "depth_channels=" + std::to_string(cfg.depth_channels) + "\n";
  out += "c_s=" + std::to_string(cfg.c_s) + "\n";
  out += "c_d=" + std::to_string(cfg.c_d) + "\n";
  out += "heads=" + std::to_string(cfg.heads) + "\n";
  out += "enc_blocks=" + std::to_string(cfg.enc_blocks) + "\n";
  out += "mlp_ratio=" + std::to_string(cfg.mlp_ratio) + "\n";
  out += "lca_radius=" + std::to_string(cfg.lca_radius) + "\n";
  out += "dcm_kernel=" + std::to_string(cfg.dcm_kernel) + "\n";
  out += "ln_eps=" + fmt_double(cfg.ln_eps) + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Attention dumps

std::vector<std::string> dump_attention(const ParamStore& ps, const ModelConfig& cfg,
                                        const Sample& sample, const std::string& out_dir) {
  check_config(cfg);
  fs::create_directories(out_dir);
  Tape t;
  ModelTrace trace;
  const ModelOut out = model_forward(t, ps, cfg, sample.rgb, sample.depth, &trace);

  const int g = cfg.input / 16;
  const int nq = g * g;
  const int corner = 0;
  const int center = (g / 2) * g + g / 2;

  std::vector<std::string> written;
  const auto save = [&](const std::string& name, const Tensor& img) {
    write_pgm((fs::path(out_dir) / name).string(), img);
    written.push_back(name);
  };

  struct StageMap {
    const char* tag;
    const AttnMaps* maps;
  };
  const StageMap stages[] = {{"gsa_r", &trace.hca.gsa_rgb},
                             {"gsa_d", &trace.hca.gsa_dep},
                             {"lca_r", &trace.hca.lca_rgb},
                             {"lca_d", &trace.hca.lca_dep}};
  for (const StageMap& st : stages) {
    if (st.maps->heads.empty()) throw Error("dump_attention: the forward pass left no trace");
    const Tensor& head0 = st.maps->heads.front();  // [nq, nk] with nk == nq here
    for (const int q : {corner, center}) {
      Tensor img = Tensor::zeros({g, g});
      for (int k = 0; k < nq; ++k) img.data[static_cast<std::size_t>(k)] = head0.at(q, k);
      char nm[32];
      std::snprintf(nm, sizeof nm, "%s_q%04d.pgm", st.tag, q);
      save(nm, img);
    }
  }

  for (int i = 0; i < 4; ++i) {
    const MapRef mr = out.dec.preds[static_cast<std::size_t>(i)];
    const Tensor& logits = t.val(mr.id);
    Tensor prob = Tensor::zeros({mr.h, mr.w});
    for (std::size_t j = 0; j < prob.data.size(); ++j) {
      prob.data[j] = 1.0 / (1.0 + std::exp(-logits.data[j]));
    }
    char nm[16];
    std::snprintf(nm, sizeof nm, "p%d.pgm", i + 1);
    save(nm, prob);
  }
  save("final.pgm", t.val(out.dec.final.id));
  return written;
}

}  // namespace hct
