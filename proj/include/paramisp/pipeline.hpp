#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paramisp/arch.hpp"
#include "paramisp/canonet.hpp"
#include "paramisp/globalnet.hpp"
#include "paramisp/localnet.hpp"
#include "paramisp/nn.hpp"
#include "paramisp/paramnet.hpp"

namespace paramisp {

enum class Direction : uint8_t { Forward = 0, Inverse = 1 };

const char* direction_name(Direction d) noexcept;
/// Accepts fwd/forward and inv/inverse.
Direction parse_direction(std::string_view name);

struct ModelConfig {
  Direction direction = Direction::Forward;
  ArchConfig arch;
  EqualizationConfig equalization = EqualizationConfig::defaults();
};

/// Spatial multiple both networks are run at; inputs are mirror padded up to it.
inline constexpr int64_t kSpatialMultiple = 16;

/// One direction of the learned ISP. Weights live in params(); the object is
/// move-only because networks hold handles into that store.
template <class T>
class IspModelT {
 public:
  IspModelT(const ModelConfig& config, uint64_t seed);
  IspModelT(IspModelT&&) noexcept = default;
  IspModelT& operator=(IspModelT&&) noexcept = default;
  IspModelT(const IspModelT&) = delete;
  IspModelT& operator=(const IspModelT&) = delete;

  Direction direction() const { return config_.direction; }
  const ModelConfig& config() const { return config_; }
  const ParamStore<T>& params() const { return *store_; }
  /// Parameters the optimizer should update.
  std::vector<Tensor<T>> trainable() const;

  /// z_dim x 1; zeros when ParamNet is disabled.
  Tensor<T> conditioning(const OpticalParams& opt, const RunContext& ctx) const;

  /// RAW (1 x H x W) to sRGB (3 x H x W) in [0,1].
  Tensor<T> forward(const Tensor<T>& raw, const CanonicalParams& cano, const OpticalParams& opt,
                    const RunContext& ctx = {}) const;
  /// sRGB (3 x H x W) to RAW (1 x H x W) in [0,1].
  Tensor<T> inverse(const Tensor<T>& srgb, const CanonicalParams& cano, const OpticalParams& opt,
                    const RunContext& ctx = {}) const;

  /// The learned stages on a 3 x H x W image, with padding and cropping.
  Tensor<T> local_stage(const Tensor<T>& img, const Tensor<T>& z) const;
  Tensor<T> global_stage(const Tensor<T>& img, const Tensor<T>& z) const;

  /// Copy all weights, converting precision, into a new model of the same configuration.
  template <class U>
  IspModelT<U> cast() const;
  /// Overwrite weights with another model's (same configuration) values.
  template <class U>
  void load_weights_from(const IspModelT<U>& other);
  /// Overwrite one named tensor's values.
  void set_values(const std::string& name, std::span<const float> values);

 private:
  void require(Direction d, const char* op) const;

  ModelConfig config_;
  std::unique_ptr<ParamStore<T>> store_;
  ParamNet<T> paramnet_;
  LocalNet<T> local_;
  GlobalNet<T> global_;
};

using IspModel = IspModelT<float>;

/// Mirror pad bottom/right to a multiple of `multiple`.
template <class T> Tensor<T> pad_to_multiple(const Tensor<T>& img, int64_t multiple);

/// Render srgb as if captured by camera B: forward_B(inverse_A(srgb)).
template <class T>
Tensor<T> camera_transfer(const Tensor<T>& srgb, const IspModelT<T>& inverse_a, const IspModelT<T>& forward_b,
                          const CanonicalParams& cano_a, const CanonicalParams& cano_b, const OpticalParams& opt);

}  // namespace paramisp
