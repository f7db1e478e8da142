#include "gdwct/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace gdwct {

namespace {

struct Violation {
  std::string key;
  std::string message;
};

std::optional<Violation> find_violation(const TrainConfig& c) {
  const NetworkConfig& n = c.net;
  if (!(c.lr > 0)) return Violation{"lr", "lr must be positive"};
  if (!(c.beta1 >= 0 && c.beta1 < 1)) return Violation{"beta1", "beta1 must be in [0, 1)"};
  if (!(c.beta2 >= 0 && c.beta2 < 1)) return Violation{"beta2", "beta2 must be in [0, 1)"};
  if (!(c.adam_eps > 0)) return Violation{"adam_eps", "adam_eps must be positive"};
  if (!(c.decay_rate > 0 && c.decay_rate <= 1))
    return Violation{"decay_rate", "decay_rate must be in (0, 1]"};
  if (c.decay_every == 0) return Violation{"decay_every", "decay_every must be positive"};
  if (c.batch_size == 0) return Violation{"batch_size", "batch_size must be positive"};
  if (c.synth_per_domain == 0) return Violation{"synth_per_domain", "synth_per_domain must be positive"};
  const LossWeights& w = c.weights;
  for (auto [key, value] : {std::pair{"lambda_latent", w.lambda_latent}, {"lambda_pixel", w.lambda_pixel},
                            {"lambda_w", w.lambda_w}, {"lambda_c", w.lambda_c}}) {
    if (!(value >= 0)) return Violation{key, std::string(key) + " must be non-negative"};
  }
  if (n.groups == 0 || n.base_channels % n.groups != 0) {
    return Violation{"groups", "base_channels (" + std::to_string(n.base_channels) +
                                   ") is not divisible by groups (" + std::to_string(n.groups) + ")"};
  }
  try {
    n.validate();
  } catch (const ConfigError& e) {
    return Violation{"", e.what()};
  }
  return std::nullopt;
}

template <class T>
void parse_number(std::string_view text, T& out, std::size_t line, std::string_view key) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(line, "cannot parse value '" + std::string(text) + "' for key '" +
                                std::string(key) + "'");
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(TrainConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, std::string_view v, std::size_t line) {
            parse_number(v, c.*member, line, "");
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_number(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <class Outer, class T>
Field nested_field(Outer TrainConfig::*outer, T Outer::*member) {
  return {[outer, member](TrainConfig& c, std::string_view v, std::size_t line) {
            parse_number(v, c.*outer.*member, line, "");
          },
          [outer, member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_number(c.*outer.*member);
            else return std::to_string(c.*outer.*member);
          }};
}

Field bool_field(bool TrainConfig::*member) {
  return {[member](TrainConfig& c, std::string_view v, std::size_t line) {
            if (v == "true" || v == "1") c.*member = true;
            else if (v == "false" || v == "0") c.*member = false;
            else throw ConfigError(line, "cannot parse boolean '" + std::string(v) + "'");
          },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

// Ordered so format_config output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"lr", number_field(&TrainConfig::lr)},
      {"beta1", number_field(&TrainConfig::beta1)},
      {"beta2", number_field(&TrainConfig::beta2)},
      {"adam_eps", number_field(&TrainConfig::adam_eps)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"total_iters", number_field(&TrainConfig::total_iters)},
      {"decay_start_iter", number_field(&TrainConfig::decay_start_iter)},
      {"decay_every", number_field(&TrainConfig::decay_every)},
      {"decay_rate", number_field(&TrainConfig::decay_rate)},
      {"seed", number_field(&TrainConfig::seed)},
      {"lambda_latent", nested_field(&TrainConfig::weights, &LossWeights::lambda_latent)},
      {"lambda_pixel", nested_field(&TrainConfig::weights, &LossWeights::lambda_pixel)},
      {"lambda_w", nested_field(&TrainConfig::weights, &LossWeights::lambda_w)},
      {"lambda_c", nested_field(&TrainConfig::weights, &LossWeights::lambda_c)},
      {"base_channels", nested_field(&TrainConfig::net, &NetworkConfig::base_channels)},
      {"n_res_blocks", nested_field(&TrainConfig::net, &NetworkConfig::n_res_blocks)},
      {"n_hops", nested_field(&TrainConfig::net, &NetworkConfig::n_hops)},
      {"groups", nested_field(&TrainConfig::net, &NetworkConfig::groups)},
      {"image_size", nested_field(&TrainConfig::net, &NetworkConfig::image_size)},
      {"mlp_depth", nested_field(&TrainConfig::net, &NetworkConfig::mlp_depth)},
      {"mlp_hidden", nested_field(&TrainConfig::net, &NetworkConfig::mlp_hidden)},
      {"stem_kernel", nested_field(&TrainConfig::net, &NetworkConfig::stem_kernel)},
      {"down_kernel", nested_field(&TrainConfig::net, &NetworkConfig::down_kernel)},
      {"disc_channels", nested_field(&TrainConfig::net, &NetworkConfig::disc_channels)},
      {"disc_scales", nested_field(&TrainConfig::net, &NetworkConfig::disc_scales)},
      {"synth_per_domain", number_field(&TrainConfig::synth_per_domain)},
      {"center_crop", bool_field(&TrainConfig::center_crop)},
      {"checkpoint_every", number_field(&TrainConfig::checkpoint_every)},
      {"sample_every", number_field(&TrainConfig::sample_every)},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void TrainConfig::validate() const {
  if (auto v = find_violation(*this)) throw ConfigError(0, v->message);
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig config;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const auto& f) { return f.first == key; });
    if (it == table.end()) throw ConfigError(line_no, "unknown key '" + key + "'");
    if (seen.count(key)) throw ConfigError(line_no, "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(line_no, "missing value for key '" + key + "'");
    seen[key] = line_no;
    try {
      it->second.set(config, value, line_no);
    } catch (const ConfigError&) {
      throw ConfigError(line_no, "cannot parse value '" + std::string(value) + "' for key '" + key + "'");
    }
  }
  if (auto v = find_violation(config)) {
    const auto it = seen.find(v->key);
    throw ConfigError(it == seen.end() ? 0 : it->second, v->message);
  }
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace gdwct
