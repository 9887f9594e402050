#pragma once

#include <cstddef>
#include <string>

#include "sanar/error.hpp"

namespace sanar {

/// Positional-encoding scheme selector.  Only the parameter-free sinusoidal
/// table is implemented; the id exists so configs and checkpoints name the
/// scheme explicitly.
enum class Positional { Sinusoidal };

inline std::string to_string(Positional p) {
  switch (p) {
    case Positional::Sinusoidal:
      return "sinusoidal";
  }
  throw Error("unknown positional scheme");
}

inline Positional positional_from_string(const std::string& s) {
  if (s == "sinusoidal") return Positional::Sinusoidal;
  throw ParseError("unknown positional scheme: " + s);
}

/// Architecture hyperparameters shared by every model variant.  Defaults are
/// the desk-scale configuration: small enough to overfit on one CPU core
/// while keeping the full architecture shape.
struct ModelConfig {
  std::size_t layers = 4;        ///< encoder depth and decoder depth
  std::size_t model_width = 256;
  std::size_t heads = 4;
  std::size_t ffn_width = 1024;
  double dropout = 0.1;
  std::size_t max_len_class = 64;   ///< length classes 1..max_len_class
  std::size_t max_positions = 256;  ///< positional-encoding range
  std::size_t vocab_size = 0;       ///< set from the vocabulary before use
  Positional positional = Positional::Sinusoidal;
  double softcopy_tau = 0.3;

  void validate() const {
    if (layers == 0) throw Error("config: layers must be >= 1");
    if (model_width == 0 || heads == 0 || model_width % heads != 0)
      throw Error("config: model_width must be a positive multiple of heads");
    if (ffn_width == 0) throw Error("config: ffn_width must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw Error("config: dropout must lie in [0, 1)");
    if (max_len_class < 1) throw Error("config: max_len_class must be >= 1");
    if (max_positions == 0) throw Error("config: max_positions must be >= 1");
    if (vocab_size == 0) throw Error("config: vocab_size is unset");
    if (softcopy_tau <= 0.0) throw Error("config: softcopy_tau must be positive");
  }
};

}  // namespace sanar
