#include "sanar/run_config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <unordered_map>

#include "json.hpp"

namespace sanar {

namespace {

using json = nlohmann::json;

// Strict whole-string numeric parsing; "1.5x" or "" must fail loudly.
template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ParseError("config: key '" + key + "': cannot parse '" + value +
                     "' as " + (std::is_floating_point_v<T> ? "a number"
                                                            : "an integer"));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

// One entry per accepted key.  Field names double as file keys and CLI
// override flags, so adding a field here wires it everywhere at once.
const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      // Architecture.
      {"layers",
       [](RunConfig& rc, const std::string& v) {
         rc.model.layers = parse_number<std::size_t>("layers", v);
       }},
      {"model_width",
       [](RunConfig& rc, const std::string& v) {
         rc.model.model_width = parse_number<std::size_t>("model_width", v);
       }},
      {"heads",
       [](RunConfig& rc, const std::string& v) {
         rc.model.heads = parse_number<std::size_t>("heads", v);
       }},
      {"ffn_width",
       [](RunConfig& rc, const std::string& v) {
         rc.model.ffn_width = parse_number<std::size_t>("ffn_width", v);
       }},
      {"dropout",
       [](RunConfig& rc, const std::string& v) {
         rc.model.dropout = parse_number<double>("dropout", v);
       }},
      {"max_len_class",
       [](RunConfig& rc, const std::string& v) {
         rc.model.max_len_class = parse_number<std::size_t>("max_len_class", v);
       }},
      {"max_positions",
       [](RunConfig& rc, const std::string& v) {
         rc.model.max_positions = parse_number<std::size_t>("max_positions", v);
       }},
      {"vocab_size",
       [](RunConfig& rc, const std::string& v) {
         rc.model.vocab_size = parse_number<std::size_t>("vocab_size", v);
       }},
      {"positional",
       [](RunConfig& rc, const std::string& v) {
         rc.model.positional = positional_from_string(v);
       }},
      {"softcopy_tau",
       [](RunConfig& rc, const std::string& v) {
         rc.model.softcopy_tau = parse_number<double>("softcopy_tau", v);
       }},
      // Model variant.
      {"kind",
       [](RunConfig& rc, const std::string& v) {
         rc.kind = model_kind_from_string(v);
       }},
      // Training schedule.
      {"lambda",
       [](RunConfig& rc, const std::string& v) {
         rc.train.lambda = parse_number<double>("lambda", v);
       }},
      {"glance_p",
       [](RunConfig& rc, const std::string& v) {
         rc.train.glance_p = parse_number<double>("glance_p", v);
       }},
      {"batch_tokens",
       [](RunConfig& rc, const std::string& v) {
         rc.train.batch_tokens = parse_number<std::size_t>("batch_tokens", v);
       }},
      {"warmup_steps",
       [](RunConfig& rc, const std::string& v) {
         rc.train.warmup_steps = parse_number<std::size_t>("warmup_steps", v);
       }},
      {"peak_lr",
       [](RunConfig& rc, const std::string& v) {
         rc.train.peak_lr = parse_number<double>("peak_lr", v);
       }},
      {"total_steps",
       [](RunConfig& rc, const std::string& v) {
         rc.train.total_steps = parse_number<std::size_t>("total_steps", v);
       }},
      {"seed",
       [](RunConfig& rc, const std::string& v) {
         rc.train.seed = parse_number<std::uint64_t>("seed", v);
       }},
      {"length_loss_weight",
       [](RunConfig& rc, const std::string& v) {
         rc.train.length_loss_weight =
             parse_number<double>("length_loss_weight", v);
       }},
      {"checkpoint_every",
       [](RunConfig& rc, const std::string& v) {
         rc.train.checkpoint_every =
             parse_number<std::size_t>("checkpoint_every", v);
       }},
      {"eval_every",
       [](RunConfig& rc, const std::string& v) {
         rc.train.eval_every = parse_number<std::size_t>("eval_every", v);
       }},
      {"stop_train_em",
       [](RunConfig& rc, const std::string& v) {
         rc.train.stop_train_em = parse_number<double>("stop_train_em", v);
       }},
      {"mask_prob",
       [](RunConfig& rc, const std::string& v) {
         rc.train.mask_prob = parse_number<double>("mask_prob", v);
       }},
  };
  return table;
}

const Setter& setter_for(const std::string& key) {
  static const auto index = [] {
    std::unordered_map<std::string, const Setter*> m;
    for (const auto& [key, fn] : setters()) m.emplace(key, &fn);
    return m;
  }();
  auto it = index.find(key);
  if (it == index.end()) throw UnknownKey("config: unknown key '" + key + "'");
  return *it->second;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, fn] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

void set_config_field(RunConfig& rc, const std::string& key,
                      const std::string& value) {
  setter_for(key)(rc, value);
}

RunConfig load_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;  // defaults

  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const bool blank =
        text.find_first_not_of(" \t\r\n") == std::string::npos;
    if (!blank) {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ParseError("config: " + path + ": " + e.what());
      }
      if (!j.is_object())
        throw ParseError("config: " + path + ": top level must be an object");
      for (const auto& [key, value] : j.items()) {
        // Route every scalar through the string setters so file values and
        // flag values are parsed by exactly the same rules.
        if (value.is_string())
          set_config_field(rc, key, value.get<std::string>());
        else if (value.is_number())
          set_config_field(rc, key, value.dump());
        else
          throw ParseError("config: key '" + key +
                           "': value must be a number or a string");
      }
    }
  }

  for (const auto& [key, value] : overrides) set_config_field(rc, key, value);
  return rc;
}

}  // namespace sanar
