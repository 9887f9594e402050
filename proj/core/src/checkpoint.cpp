#include "sanar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace sanar {

namespace {

using nlohmann::json;

json config_to_json(ModelKind kind, const ModelConfig& c) {
  return json{{"kind", to_string(kind)},
              {"layers", c.layers},
              {"model_width", c.model_width},
              {"heads", c.heads},
              {"ffn_width", c.ffn_width},
              {"dropout", c.dropout},
              {"max_len_class", c.max_len_class},
              {"max_positions", c.max_positions},
              {"vocab_size", c.vocab_size},
              {"positional", to_string(c.positional)},
              {"softcopy_tau", c.softcopy_tau}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.model_width = j.at("model_width").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len_class = j.at("max_len_class").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.positional = positional_from_string(j.at("positional").get<std::string>());
  c.softcopy_tau = j.at("softcopy_tau").get<double>();
  return c;
}

void put_f32_le(float v, std::string& out) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(char(bits & 0xff));
  out.push_back(char((bits >> 8) & 0xff));
  out.push_back(char((bits >> 16) & 0xff));
  out.push_back(char((bits >> 24) & 0xff));
}

float get_f32_le(const char* p) {
  const auto b = [&](int i) {
    return std::uint32_t(static_cast<unsigned char>(p[i]));
  };
  const std::uint32_t bits = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const Model<float>& model, std::uint64_t vocab_hash,
                     const std::string& path) {
  const auto params = model.parameters();
  json manifest = json::array();
  std::size_t offset = 0;
  for (const Parameter<float>* p : params) {
    manifest.push_back(json{{"name", p->name},
                            {"offset", offset},
                            {"shape", p->value.shape()}});
    offset += p->value.numel() * 4;
  }
  json header{{"config", config_to_json(model.kind(), model.config())},
              {"format_version", 1},
              {"manifest", std::move(manifest)},
              {"vocab_hash", vocab_hash}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << header.dump() << '\n';
  std::string payload;
  payload.reserve(offset);
  for (const Parameter<float>* p : params)
    for (std::size_t i = 0; i < p->value.numel(); ++i)
      put_f32_le(p->value[i], payload);
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw IoError("failed writing checkpoint payload: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string header_line;
  if (!std::getline(in, header_line))
    throw IoError("checkpoint has no header line: " + path);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  ModelKind kind;
  ModelConfig cfg;
  std::uint64_t vocab_hash = 0;
  json manifest;
  try {
    if (header.at("format_version").get<int>() != 1)
      throw FormatVersionMismatch("unsupported checkpoint format version");
    const json& jc = header.at("config");
    kind = model_kind_from_string(jc.at("kind").get<std::string>());
    cfg = config_from_json(jc);
    vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    manifest = header.at("manifest");
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }

  LoadedModel loaded;
  loaded.vocab_hash = vocab_hash;
  loaded.model = std::make_unique<Model<float>>(kind, cfg, /*seed=*/0);
  auto params = loaded.model->parameters();
  if (!manifest.is_array() || manifest.size() != params.size())
    throw ShapeMismatch("checkpoint manifest does not match the model layout");

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = manifest.at(i);
    if (entry.at("name").get<std::string>() != params[i]->name ||
        entry.at("shape").get<std::vector<std::size_t>>() !=
            params[i]->value.shape() ||
        entry.at("offset").get<std::size_t>() != expected)
      throw ShapeMismatch("checkpoint manifest mismatch at " + params[i]->name);
    expected += params[i]->value.numel() * 4;
  }
  if (payload.size() != expected)
    throw IoError("checkpoint payload truncated or oversized");
  std::size_t pos = 0;
  for (Parameter<float>* p : params)
    for (std::size_t i = 0; i < p->value.numel(); ++i, pos += 4)
      p->value[i] = get_f32_le(payload.data() + pos);
  return loaded;
}

}  // namespace sanar
