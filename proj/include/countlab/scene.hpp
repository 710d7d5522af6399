#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "countlab/image.hpp"

namespace countlab {

// Canvas geometry. patch_px must divide canvas_px; the image-token grid is
// (canvas_px / patch_px) per side.
struct CanvasSpec {
    int canvas_px = 64;
    int patch_px = 8;

    int grid() const { return canvas_px / patch_px; }
    int patches() const { return grid() * grid(); }
    void validate(int max_count = 0) const;
    bool operator==(const CanvasSpec&) const = default;
};

enum class SceneKind { SynDot, SynPoly, ColorShape };
std::string to_string(SceneKind k);
SceneKind scene_kind_from_string(const std::string& s);

enum class Shape { Circle, Triangle, Square, Pentagon, Hexagon, Octagon, Star, Diamond };
std::string to_string(Shape s);
Shape shape_from_string(const std::string& s);
// Vertex count for regular polygons, 0 for circle/star/diamond.
int polygon_sides(Shape s);

struct PaletteColor {
    std::string name;
    std::array<std::uint8_t, 3> rgb;
};
// Fixed 10-color palette; indices are stable across runs.
const std::vector<PaletteColor>& palette();
const std::vector<Shape>& colorshape_shapes();

struct ObjectAttr {
    Shape shape = Shape::Circle;
    std::string color_name = "black";
    std::array<std::uint8_t, 3> rgb{0, 0, 0};
    double cx = 0, cy = 0;   // pixel coordinates of the center
    double radius = 0;       // circumradius in pixels
    double rotation = 0;     // radians
};

struct RenderedScene {
    SceneKind kind = SceneKind::SynDot;
    CanvasSpec spec;
    std::uint64_t seed = 0;
    int radius_px = 0;  // generation radius for SynDot/SynPoly; per-object for ColorShape
    int spread = 1;     // placement stride in patches
    std::vector<ObjectAttr> objects;
    Image image;

    int count() const { return static_cast<int>(objects.size()); }
};

// Black dots on a white canvas, centers on distinct patch centers.
// Requires 2 * radius_px < spread * patch_px so objects cannot touch.
RenderedScene gen_syndot(const CanvasSpec& spec, int count, int radius_px,
                         std::uint64_t seed, int spread = 1);

// Colored regular polygons (3..6 sides, uniform rotation), same placement rule.
// distinct_colors draws the per-scene colors without replacement.
RenderedScene gen_synpoly(const CanvasSpec& spec, int count, int radius_px,
                          std::uint64_t seed, int spread = 1,
                          bool distinct_colors = false);

// One colored shape at a random position and radius; color/shape are drawn
// from the seed stream unless forced (forcing keeps the stream aligned, which
// is how manifest regeneration reproduces balanced datasets).
RenderedScene gen_colorshape(const CanvasSpec& spec, std::uint64_t seed,
                             int forced_color = -1, int forced_shape = -1);

// Clean/corrupted scenes sharing one placement stream: the first
// min(count_clean, count_corrupted) objects are identical.
struct CounterfactualPair {
    RenderedScene clean;
    RenderedScene corrupted;
    std::uint64_t seed = 0;
};
CounterfactualPair make_pair(const CanvasSpec& spec, SceneKind kind, int count_clean,
                             int count_corrupted, int radius_px, std::uint64_t seed,
                             int spread = 1);

// Gaussian object-location prior over the patch grid, row-major patch order,
// normalized to sum 1. Zero objects gives the uniform distribution.
Eigen::VectorXd focus_prior(const RenderedScene& scene, double sigma);

// Binary mask (0/255) of a single object on an otherwise empty canvas.
Image instance_mask(const CanvasSpec& spec, const ObjectAttr& attr);

// Patch indices whose overlap with the object's mask is >= min_px pixels.
std::vector<int> instance_patches(const CanvasSpec& spec, const ObjectAttr& attr,
                                  int min_px = 1);

// Union of instance_patches over all objects in the scene.
std::vector<int> scene_object_patches(const RenderedScene& scene, int min_px = 1);

// Re-render a scene from its generation parameters; used by dataset
// verification. For ColorShape pass the stored color/shape names.
RenderedScene regenerate_scene(SceneKind kind, const CanvasSpec& spec, int count,
                               int radius_px, int spread, std::uint64_t seed,
                               bool distinct_colors, const std::string& color_name,
                               const std::string& shape_name);

}  // namespace countlab
