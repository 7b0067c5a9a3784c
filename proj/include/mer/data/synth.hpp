#pragma once

// Procedural face-like frames for dataset-free runs. Each class combines a
// peripheral texture (visible only outside the five region boxes) with a
// small blob inside one region:
//
//   class        texture     blob region
//   Happiness    horizontal  oral
//   Surprise     horizontal  ocular_brow
//   Disgust      vertical    ocular_brow
//   Repression   vertical    oral
//   Others       checker     mandibular
//
// Neither cue alone separates all five classes. Stripe phase, blob position
// and blob polarity are random, so class means carry no signal.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mer/data/dataset.hpp"

namespace mer::data {

enum class Texture { horizontal, vertical, checker };

Texture cue_texture(Emotion e);
Region cue_region(Emotion e);

struct SynthConfig {
  Index height = 282;
  Index width = 231;
  Index channels = 1;
  Index num_subjects = 10;
  double texture_amplitude = 0.12;
  double stripe_period = 14.0;
  double blob_amplitude = 0.35;
  double blob_sigma = 6.0;
  double noise_std = 0.02;
  // Cue strength of the onset frame relative to the apex.
  double onset_fraction = 0.2;
};

struct SynthFrames {
  ManifestRecord record;
  Image onset;
  Image apex;
};

// Sample i has label i mod 5 and subject (i / 5) mod num_subjects; its content
// depends only on (seed, i), never on n. Pixels sit on the 8-bit grid so a
// dump and reload reproduces them exactly.
std::vector<SynthFrames> synth_frames(std::size_t n, std::uint64_t seed, const SynthConfig& config = {});

std::vector<Sample> synth_generate(std::size_t n, std::uint64_t seed, const SynthConfig& config = {},
                                   const CropGeometry& geometry = {});

// Writes <dir>/images/<id>_onset.p?m, <id>_apex.p?m and <dir>/manifest.jsonl;
// returns the manifest path.
std::filesystem::path write_synthetic(const std::filesystem::path& dir, const std::vector<SynthFrames>& frames);

}  // namespace mer::data
