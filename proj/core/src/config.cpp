#include "m2d/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace m2d {

Config Config::desk() {
  Config c;
  c.feature_dim = 64;
  c.d_v = 64;
  c.d_t = 64;
  c.d_e = 64;
  c.scales = {16, 8, 4};
  c.conv_layers = 3;
  c.conv_kernel = 3;
  c.caption_hidden = 96;
  c.batch = 16;
  c.steps = 400;
  c.checkpoint_every = 200;
  return c;
}

void Config::validate() const {
  auto positive = [](std::int64_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(feature_dim, "feature_dim");
  positive(d_v, "d_v");
  positive(d_t, "d_t");
  positive(d_e, "d_e");
  positive(caption_hidden, "caption_hidden");
  positive(conv_layers, "conv_layers");
  positive(top_k, "top_k");
  positive(frames_per_clip, "frames_per_clip");
  positive(batch, "batch");
  positive(steps, "steps");
  positive(checkpoint_every, "checkpoint_every");
  if (d_t % 2 != 0) throw ConfigError("d_t must be even (bidirectional split)");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel must be odd and >= 1");
  }
  if (scales.empty()) throw ConfigError("scales must not be empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] < 1) throw ConfigError("scales entries must be >= 1");
    if (i > 0 && scales[i] >= scales[i - 1]) {
      throw ConfigError("scales must be strictly decreasing");
    }
  }
  if (fps <= 0.0) throw ConfigError("fps must be positive");
  if (!(l_min >= 0.0 && l_min < l_max && l_max <= 1.0)) {
    throw ConfigError("need 0 <= l_min < l_max <= 1");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (!(nms_threshold > 0.0 && nms_threshold < 1.0)) {
    throw ConfigError("nms_threshold must lie in (0, 1)");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& v, const std::string& key) {
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config: bad integer '" + v + "' for " + key);
  }
  return out;
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + v + "' for " + key);
  }
}

std::vector<std::int64_t> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(item, key));
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  if (key == "feature_dim") feature_dim = parse_int(value, key);
  else if (key == "d_v") d_v = parse_int(value, key);
  else if (key == "d_t") d_t = parse_int(value, key);
  else if (key == "d_e") d_e = parse_int(value, key);
  else if (key == "scales") scales = parse_int_list(value, key);
  else if (key == "frames_per_clip") frames_per_clip = parse_int(value, key);
  else if (key == "fps") fps = parse_double(value, key);
  else if (key == "conv_layers") conv_layers = parse_int(value, key);
  else if (key == "conv_kernel") conv_kernel = parse_int(value, key);
  else if (key == "caption_hidden") caption_hidden = parse_int(value, key);
  else if (key == "top_k") top_k = parse_int(value, key);
  else if (key == "l_min") l_min = parse_double(value, key);
  else if (key == "l_max") l_max = parse_double(value, key);
  else if (key == "lambda") lambda = parse_double(value, key);
  else if (key == "lr") lr = parse_double(value, key);
  else if (key == "batch") batch = parse_int(value, key);
  else if (key == "steps") steps = parse_int(value, key);
  else if (key == "checkpoint_every") checkpoint_every = parse_int(value, key);
  else if (key == "nms_threshold") nms_threshold = parse_double(value, key);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "threads") threads = parse_int(value, key);
  else throw ConfigError("config: unknown key '" + key + "'");
}

Config Config::parse(const std::string& text) {
  Config c;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

std::string Config::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << "feature_dim = " << feature_dim << "\n";
  os << "d_v = " << d_v << "\n";
  os << "d_t = " << d_t << "\n";
  os << "d_e = " << d_e << "\n";
  os << "scales = ";
  for (std::size_t i = 0; i < scales.size(); ++i) os << (i ? "," : "") << scales[i];
  os << "\n";
  os << "frames_per_clip = " << frames_per_clip << "\n";
  os << "fps = " << fps << "\n";
  os << "conv_layers = " << conv_layers << "\n";
  os << "conv_kernel = " << conv_kernel << "\n";
  os << "caption_hidden = " << caption_hidden << "\n";
  os << "top_k = " << top_k << "\n";
  os << "l_min = " << l_min << "\n";
  os << "l_max = " << l_max << "\n";
  os << "lambda = " << lambda << "\n";
  os << "lr = " << lr << "\n";
  os << "batch = " << batch << "\n";
  os << "steps = " << steps << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  os << "nms_threshold = " << nms_threshold << "\n";
  os << "seed = " << seed << "\n";
  os << "threads = " << threads << "\n";
  return os.str();
}

void Config::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("config: cannot write '" + path + "'");
  os << to_string();
}

}  // namespace m2d
