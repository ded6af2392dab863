#pragma once

#include "tlsmon/analysis.hpp"
#include "tlsmon/deformation.hpp"
#include "tlsmon/ground_filter.hpp"
#include "tlsmon/multiview.hpp"
#include "tlsmon/registration.hpp"
#include "tlsmon/synth.hpp"
#include "tlsmon/terrain.hpp"

#include "tlsmon/error.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

// JSON forms of the parameter structs. Readers start from the struct's
// defaults and override the keys present; unknown keys raise Parse.
// Infinite distances are written as null.

namespace tlsmon {

// Reads members of one JSON object, remembering which keys were asked for;
// finish() rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw Error(ErrorCode::Parse, what_ + ": expected an object");
  }

  template <typename T>
  ObjectReader& get(const char* key, T& out) {
    keys_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, what_ + "." + key + ": " + e.what());
      } catch (const Error& e) {
        throw Error(e.code(), what_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  // null stands for infinity.
  ObjectReader& distance(const char* key, double& out) {
    keys_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      if (it->is_null()) {
        out = std::numeric_limits<double>::infinity();
      } else if (it->is_number()) {
        out = it->get<double>();
      } else {
        throw Error(ErrorCode::Parse, what_ + "." + key + ": expected a number or null");
      }
    }
    return *this;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!keys_.count(it.key())) throw Error(ErrorCode::Parse, what_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string what_;
  std::set<std::string> keys_;
};

inline nlohmann::json distance_json(double d) { return std::isinf(d) ? nlohmann::json(nullptr) : nlohmann::json(d); }


void to_json(nlohmann::json& j, const RigidTransform& v);
void from_json(const nlohmann::json& j, RigidTransform& v);
void to_json(nlohmann::json& j, const Plane& v);
void from_json(const nlohmann::json& j, Plane& v);
void to_json(nlohmann::json& j, const IcpParams& v);
void from_json(const nlohmann::json& j, IcpParams& v);
void to_json(nlohmann::json& j, const KeypointParams& v);
void from_json(const nlohmann::json& j, KeypointParams& v);
void to_json(nlohmann::json& j, const DescriptorParams& v);
void from_json(const nlohmann::json& j, DescriptorParams& v);
void to_json(nlohmann::json& j, const FeatureParams& v);
void from_json(const nlohmann::json& j, FeatureParams& v);
void to_json(nlohmann::json& j, const CoarseParams& v);
void from_json(const nlohmann::json& j, CoarseParams& v);
void to_json(nlohmann::json& j, const HybridParams& v);
void from_json(const nlohmann::json& j, HybridParams& v);
void to_json(nlohmann::json& j, const MultiviewParams& v);
void from_json(const nlohmann::json& j, MultiviewParams& v);
void to_json(nlohmann::json& j, const ClothParams& v);
void from_json(const nlohmann::json& j, ClothParams& v);
void to_json(nlohmann::json& j, const FilterParams& v);
void from_json(const nlohmann::json& j, FilterParams& v);
void to_json(nlohmann::json& j, const DtmParams& v);
void from_json(const nlohmann::json& j, DtmParams& v);
void to_json(nlohmann::json& j, const MeshDistanceParams& v);
void from_json(const nlohmann::json& j, MeshDistanceParams& v);
void to_json(nlohmann::json& j, const TerrainParams& v);
void from_json(const nlohmann::json& j, TerrainParams& v);
void to_json(nlohmann::json& j, const VegetationParams& v);
void from_json(const nlohmann::json& j, VegetationParams& v);
void to_json(nlohmann::json& j, const StationParams& v);
void from_json(const nlohmann::json& j, StationParams& v);
void to_json(nlohmann::json& j, const RegionSpec& v);
void from_json(const nlohmann::json& j, RegionSpec& v);
void to_json(nlohmann::json& j, const RegistrationResult& v);
void to_json(nlohmann::json& j, const ErrorBudget& v);
void from_json(const nlohmann::json& j, ErrorBudget& v);

// Region list with vertex sets, as written by the `regions` step.
nlohmann::json regions_to_json(const std::vector<Region>& regions);
std::vector<Region> regions_from_json(const nlohmann::json& doc);

}  // namespace tlsmon
