#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "albedo/coefficients.hpp"

namespace albedo {

// Artifact plumbing shared by the batch pipelines: deterministic hashing,
// directory handling, and raw array dumps. Serialization of structured
// reports stays with the runner, which owns the provenance block.

// FNV-1a over the canonical configuration text; the same bytes hash the same
// on every platform, so artifacts can name the config that produced them.
std::uint64_t fnv1a_hash(const std::string& text);
std::string hash_hex(std::uint64_t h);

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Little-endian float64 dump; the caller writes a JSON manifest next to it.
void write_doubles(const std::string& path, const std::vector<double>& values);

// Raw scalar field plus manifest carrying grid geometry and the provenance
// block the runner composed.
void write_field(const std::string& dir, const std::string& name, const ScalarField& field,
                 const std::string& provenance_json);

}  // namespace albedo
