#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "sanar/model.hpp"

namespace sanar {

/// Writes the model to path as one JSON header line
///   {"config": {...incl. kind...}, "format_version": 1,
///    "manifest": [{"name", "offset", "shape"}...], "vocab_hash": ...}
/// followed by the raw little-endian 32-bit float payload, parameters in
/// their stable order, offsets in bytes from the payload start.  The same
/// model state always produces byte-identical files.
void save_checkpoint(const Model<float>& model, std::uint64_t vocab_hash,
                     const std::string& path);

struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  std::uint64_t vocab_hash = 0;
};

/// Rebuilds a model from a checkpoint; tensor payloads round-trip
/// bit-exactly.  Throws IoError on missing/truncated files, ParseError on a
/// malformed header, FormatVersionMismatch on an unknown version and
/// ShapeMismatch when the manifest does not match the declared config.
LoadedModel load_checkpoint(const std::string& path);

}  // namespace sanar
