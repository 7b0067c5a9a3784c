#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mer/data/image.hpp"

namespace mer::data {

// Facial regions in the fixed order used for the stacked region input.
enum class Region { ocular_brow, oral, mandibular, cheek, nasal };
inline constexpr std::size_t kNumRegions = 5;
inline constexpr std::array<Region, kNumRegions> kRegions = {Region::ocular_brow, Region::oral, Region::mandibular,
                                                             Region::cheek, Region::nasal};

const char* region_name(Region r);
std::optional<Region> parse_region(const std::string& name);

// Region owning an action unit; std::nullopt for AUs outside the map.
std::optional<Region> region_for_au(int au);
// Action units mapped to a region, ascending.
const std::vector<int>& aus_of(Region r);

// Fixed-proportion region boxes inside a face box, in kRegions order.
std::array<BBox, kNumRegions> default_region_layout(const BBox& face);

enum class Emotion { happiness, surprise, disgust, repression, others };
inline constexpr int kNumEmotions = 5;

const char* emotion_name(Emotion e);
// Canonical class names indexed by class id.
const std::array<std::string, kNumEmotions>& class_names();

class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Case-insensitive; Fear and Sadness fold into Others. Throws LabelError on
// anything outside {Happiness, Surprise, Disgust, Repression, Fear, Sadness, Others}.
Emotion merge_label(const std::string& raw_label);

}  // namespace mer::data
