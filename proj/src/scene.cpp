#include "countlab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "countlab/common.hpp"

namespace countlab {

namespace {

constexpr double kTau = 6.283185307179586;

void fill_disc(Image& img, double cx, double cy, double r,
               const std::array<std::uint8_t, 3>& rgb) {
    int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r + 1)));
    double r2 = r * r;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy > r2) continue;
            for (int c = 0; c < img.channels; ++c)
                img.at(x, y, c) = rgb[img.channels == 1 ? 0 : static_cast<std::size_t>(c)];
        }
    }
}

// Even-odd rule; pixel centers never coincide with edges for the rotations
// drawn here, so boundary ties are not a practical concern.
bool point_in_polygon(const std::vector<std::array<double, 2>>& v, double px, double py) {
    bool inside = false;
    std::size_t n = v.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        double x1 = v[j][0], y1 = v[j][1], x2 = v[i][0], y2 = v[i][1];
        if ((y2 > py) != (y1 > py)) {
            double xint = x2 + (py - y2) * (x1 - x2) / (y1 - y2);
            if (px < xint) inside = !inside;
        }
    }
    return inside;
}

std::vector<std::array<double, 2>> shape_vertices(const ObjectAttr& a) {
    std::vector<std::array<double, 2>> v;
    auto add = [&](double r, double theta) {
        v.push_back({a.cx + r * std::cos(theta), a.cy + r * std::sin(theta)});
    };
    int sides = polygon_sides(a.shape);
    if (sides > 0) {
        for (int k = 0; k < sides; ++k) add(a.radius, a.rotation + kTau * k / sides);
    } else if (a.shape == Shape::Star) {
        for (int k = 0; k < 10; ++k)
            add(k % 2 == 0 ? a.radius : 0.45 * a.radius, a.rotation + kTau * k / 10);
    } else if (a.shape == Shape::Diamond) {
        add(a.radius, a.rotation);
        add(0.6 * a.radius, a.rotation + kTau / 4);
        add(a.radius, a.rotation + kTau / 2);
        add(0.6 * a.radius, a.rotation + 3 * kTau / 4);
    }
    return v;
}

void fill_polygon(Image& img, const ObjectAttr& a) {
    auto v = shape_vertices(a);
    int x0 = std::max(0, static_cast<int>(std::floor(a.cx - a.radius - 1)));
    int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(a.cx + a.radius + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(a.cy - a.radius - 1)));
    int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(a.cy + a.radius + 1)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (!point_in_polygon(v, x + 0.5, y + 0.5)) continue;
            for (int c = 0; c < img.channels; ++c)
                img.at(x, y, c) = a.rgb[img.channels == 1 ? 0 : static_cast<std::size_t>(c)];
        }
    }
}

void render_object(Image& img, const ObjectAttr& a) {
    if (a.shape == Shape::Circle)
        fill_disc(img, a.cx, a.cy, a.radius, a.rgb);
    else
        fill_polygon(img, a);
}

struct Placement {
    int cell_row, cell_col;
    int sides;       // for SynPoly
    int color_idx;   // for SynPoly
    double rotation;
};

// Shared clean/corrupted stream: the first k draws depend only on the seed,
// never on the requested count, which is what gives pairs their common prefix.
std::vector<Placement> placement_stream(const CanvasSpec& spec, int spread, int count,
                                        Rng& rng, bool poly, bool distinct_colors) {
    int cells_per_side = spec.grid() / spread;
    int n_cells = cells_per_side * cells_per_side;
    std::vector<int> cells(static_cast<std::size_t>(n_cells));
    std::iota(cells.begin(), cells.end(), 0);
    std::vector<int> color_pool;
    std::vector<Placement> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_cells - i)));
        std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
        Placement p;
        p.cell_row = cells[static_cast<std::size_t>(i)] / cells_per_side;
        p.cell_col = cells[static_cast<std::size_t>(i)] % cells_per_side;
        p.sides = 0;
        p.color_idx = 0;
        p.rotation = 0.0;
        if (poly) {
            p.sides = rng.range(3, 6);
            if (distinct_colors) {
                if (color_pool.empty()) {
                    color_pool.resize(palette().size());
                    std::iota(color_pool.begin(), color_pool.end(), 0);
                    rng.shuffle(color_pool);
                }
                p.color_idx = color_pool[static_cast<std::size_t>(i)];
            } else {
                p.color_idx = static_cast<int>(rng.below(palette().size()));
            }
            p.rotation = rng.real() * kTau;
        }
        out.push_back(p);
    }
    return out;
}

void check_placement_args(const CanvasSpec& spec, int count, int radius_px, int spread) {
    spec.validate();
    check_config(spread >= 1, "spread must be >= 1");
    int cells_per_side = spec.grid() / spread;
    check_config(cells_per_side >= 1, "spread exceeds the patch grid");
    check_config(count >= 0, "count must be non-negative");
    check_config(count <= cells_per_side * cells_per_side,
                 "count exceeds placement capacity");
    check_config(radius_px >= 1, "radius must be at least 1 pixel");
    check_config(2 * radius_px < spread * spec.patch_px,
                 "objects must fit inside their placement cell");
}

ObjectAttr object_from_placement(const CanvasSpec& spec, const Placement& p,
                                 int radius_px, int spread, bool poly) {
    ObjectAttr a;
    // Center of the cell's middle patch: always a patch center, and as far
    // from the canvas edge as the cell allows so large objects stay uncropped.
    int mid = (spread - 1) / 2;
    a.cx = (p.cell_col * spread + mid) * spec.patch_px + spec.patch_px / 2.0;
    a.cy = (p.cell_row * spread + mid) * spec.patch_px + spec.patch_px / 2.0;
    a.radius = radius_px;
    if (poly) {
        a.shape = p.sides == 3   ? Shape::Triangle
                  : p.sides == 4 ? Shape::Square
                  : p.sides == 5 ? Shape::Pentagon
                                 : Shape::Hexagon;
        a.color_name = palette()[static_cast<std::size_t>(p.color_idx)].name;
        a.rgb = palette()[static_cast<std::size_t>(p.color_idx)].rgb;
        a.rotation = p.rotation;
    } else {
        a.shape = Shape::Circle;
        a.color_name = "black";
        a.rgb = {0, 0, 0};
    }
    return a;
}

RenderedScene render_placements(const CanvasSpec& spec, SceneKind kind,
                                const std::vector<Placement>& stream, int count,
                                int radius_px, int spread, std::uint64_t seed) {
    RenderedScene s;
    s.kind = kind;
    s.spec = spec;
    s.seed = seed;
    s.radius_px = radius_px;
    s.spread = spread;
    s.image = Image(spec.canvas_px, spec.canvas_px,
                    kind == SceneKind::SynDot ? 1 : 3, 255);
    bool poly = kind == SceneKind::SynPoly;
    for (int i = 0; i < count; ++i) {
        ObjectAttr a = object_from_placement(spec, stream[static_cast<std::size_t>(i)],
                                             radius_px, spread, poly);
        render_object(s.image, a);
        s.objects.push_back(a);
    }
    return s;
}

}  // namespace

void CanvasSpec::validate(int max_count) const {
    check_config(canvas_px > 0 && patch_px > 0, "canvas and patch size must be positive");
    check_config(canvas_px % patch_px == 0, "patch size must divide canvas size");
    check_config(patches() >= max_count, "patch grid too small for requested count");
}

std::string to_string(SceneKind k) {
    switch (k) {
        case SceneKind::SynDot: return "syndot";
        case SceneKind::SynPoly: return "synpoly";
        case SceneKind::ColorShape: return "colorshape";
    }
    return "?";
}

SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "syndot") return SceneKind::SynDot;
    if (s == "synpoly") return SceneKind::SynPoly;
    if (s == "colorshape") return SceneKind::ColorShape;
    throw ConfigError("unknown scene kind: " + s);
}

std::string to_string(Shape s) {
    switch (s) {
        case Shape::Circle: return "circle";
        case Shape::Triangle: return "triangle";
        case Shape::Square: return "square";
        case Shape::Pentagon: return "pentagon";
        case Shape::Hexagon: return "hexagon";
        case Shape::Octagon: return "octagon";
        case Shape::Star: return "star";
        case Shape::Diamond: return "diamond";
    }
    return "?";
}

Shape shape_from_string(const std::string& s) {
    for (Shape sh : {Shape::Circle, Shape::Triangle, Shape::Square, Shape::Pentagon,
                     Shape::Hexagon, Shape::Octagon, Shape::Star, Shape::Diamond})
        if (to_string(sh) == s) return sh;
    throw ConfigError("unknown shape: " + s);
}

int polygon_sides(Shape s) {
    switch (s) {
        case Shape::Triangle: return 3;
        case Shape::Square: return 4;
        case Shape::Pentagon: return 5;
        case Shape::Hexagon: return 6;
        case Shape::Octagon: return 8;
        default: return 0;
    }
}

const std::vector<PaletteColor>& palette() {
    static const std::vector<PaletteColor> k = {
        {"red", {255, 0, 0}},      {"blue", {0, 0, 255}},
        {"green", {0, 160, 0}},    {"yellow", {255, 215, 0}},
        {"orange", {255, 140, 0}}, {"purple", {150, 40, 180}},
        {"pink", {255, 105, 180}}, {"cyan", {0, 200, 200}},
        {"brown", {140, 80, 20}},  {"gray", {128, 128, 128}},
    };
    return k;
}

const std::vector<Shape>& colorshape_shapes() {
    static const std::vector<Shape> k = {Shape::Triangle, Shape::Square,
                                         Shape::Pentagon, Shape::Hexagon,
                                         Shape::Octagon,  Shape::Circle,
                                         Shape::Star,     Shape::Diamond};
    return k;
}

RenderedScene gen_syndot(const CanvasSpec& spec, int count, int radius_px,
                         std::uint64_t seed, int spread) {
    check_placement_args(spec, count, radius_px, spread);
    Rng rng(seed);
    auto stream = placement_stream(spec, spread, count, rng, false, false);
    return render_placements(spec, SceneKind::SynDot, stream, count, radius_px,
                             spread, seed);
}

RenderedScene gen_synpoly(const CanvasSpec& spec, int count, int radius_px,
                          std::uint64_t seed, int spread, bool distinct_colors) {
    check_placement_args(spec, count, radius_px, spread);
    if (distinct_colors)
        check_config(static_cast<std::size_t>(count) <= palette().size(),
                     "distinct colors need count <= palette size");
    Rng rng(seed);
    auto stream = placement_stream(spec, spread, count, rng, true, distinct_colors);
    RenderedScene s = render_placements(spec, SceneKind::SynPoly, stream, count,
                                        radius_px, spread, seed);
    return s;
}

RenderedScene gen_colorshape(const CanvasSpec& spec, std::uint64_t seed,
                             int forced_color, int forced_shape) {
    spec.validate();
    Rng rng(seed);
    int color = static_cast<int>(rng.below(palette().size()));
    int shape = static_cast<int>(rng.below(colorshape_shapes().size()));
    if (forced_color >= 0) color = forced_color;
    if (forced_shape >= 0) shape = forced_shape;
    check_config(color < static_cast<int>(palette().size()), "color index out of range");
    check_config(shape < static_cast<int>(colorshape_shapes().size()),
                 "shape index out of range");

    double c = spec.canvas_px;
    double r_lo = c * 30.0 / 336.0, r_hi = c * 80.0 / 336.0;
    ObjectAttr a;
    a.shape = colorshape_shapes()[static_cast<std::size_t>(shape)];
    a.color_name = palette()[static_cast<std::size_t>(color)].name;
    a.rgb = palette()[static_cast<std::size_t>(color)].rgb;
    a.radius = r_lo + rng.real() * (r_hi - r_lo);
    a.cx = a.radius + rng.real() * (c - 2 * a.radius);
    a.cy = a.radius + rng.real() * (c - 2 * a.radius);
    a.rotation = rng.real() * kTau;

    RenderedScene s;
    s.kind = SceneKind::ColorShape;
    s.spec = spec;
    s.seed = seed;
    s.radius_px = static_cast<int>(std::lround(a.radius));
    s.spread = 1;
    s.image = Image(spec.canvas_px, spec.canvas_px, 3, 255);
    render_object(s.image, a);
    s.objects.push_back(a);
    return s;
}

CounterfactualPair make_pair(const CanvasSpec& spec, SceneKind kind, int count_clean,
                             int count_corrupted, int radius_px, std::uint64_t seed,
                             int spread) {
    check_config(kind != SceneKind::ColorShape, "pairs are for counting scenes");
    check_config(count_clean != count_corrupted, "pair counts must differ");
    int max_count = std::max(count_clean, count_corrupted);
    check_placement_args(spec, max_count, radius_px, spread);
    Rng rng(seed);
    auto stream = placement_stream(spec, spread, max_count, rng,
                                   kind == SceneKind::SynPoly, false);
    CounterfactualPair p;
    p.seed = seed;
    p.clean = render_placements(spec, kind, stream, count_clean, radius_px, spread, seed);
    p.corrupted =
        render_placements(spec, kind, stream, count_corrupted, radius_px, spread, seed);
    return p;
}

Eigen::VectorXd focus_prior(const RenderedScene& scene, double sigma) {
    check_config(sigma > 0, "sigma must be positive");
    const CanvasSpec& spec = scene.spec;
    int g = spec.grid();
    Eigen::VectorXd u(g * g);
    if (scene.objects.empty()) {
        u.setConstant(1.0 / (g * g));
        return u;
    }
    for (int pr = 0; pr < g; ++pr) {
        for (int pc = 0; pc < g; ++pc) {
            double acc = 0;
            for (const auto& obj : scene.objects) {
                // Patch coordinates: patch p's center sits at coordinate p.
                double ox = obj.cx / spec.patch_px - 0.5;
                double oy = obj.cy / spec.patch_px - 0.5;
                double d2 = (pc - ox) * (pc - ox) + (pr - oy) * (pr - oy);
                acc += std::exp(-d2 / (2.0 * sigma * sigma));
            }
            u[pr * g + pc] = acc;
        }
    }
    double z = u.sum();
    check_contract(z > 0, "focus prior normalizer vanished");
    return u / z;
}

Image instance_mask(const CanvasSpec& spec, const ObjectAttr& attr) {
    Image mask(spec.canvas_px, spec.canvas_px, 1, 0);
    ObjectAttr white = attr;
    white.rgb = {255, 255, 255};
    render_object(mask, white);
    return mask;
}

std::vector<int> instance_patches(const CanvasSpec& spec, const ObjectAttr& attr,
                                  int min_px) {
    Image mask = instance_mask(spec, attr);
    int g = spec.grid();
    std::vector<int> counts(static_cast<std::size_t>(g * g), 0);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y, 0))
                counts[static_cast<std::size_t>((y / spec.patch_px) * g +
                                                x / spec.patch_px)]++;
    std::vector<int> out;
    for (int p = 0; p < g * g; ++p)
        if (counts[static_cast<std::size_t>(p)] >= min_px) out.push_back(p);
    return out;
}

std::vector<int> scene_object_patches(const RenderedScene& scene, int min_px) {
    std::vector<bool> seen(static_cast<std::size_t>(scene.spec.patches()), false);
    for (const auto& obj : scene.objects)
        for (int p : instance_patches(scene.spec, obj, min_px))
            seen[static_cast<std::size_t>(p)] = true;
    std::vector<int> out;
    for (std::size_t p = 0; p < seen.size(); ++p)
        if (seen[p]) out.push_back(static_cast<int>(p));
    return out;
}

RenderedScene regenerate_scene(SceneKind kind, const CanvasSpec& spec, int count,
                               int radius_px, int spread, std::uint64_t seed,
                               bool distinct_colors, const std::string& color_name,
                               const std::string& shape_name) {
    switch (kind) {
        case SceneKind::SynDot:
            return gen_syndot(spec, count, radius_px, seed, spread);
        case SceneKind::SynPoly:
            return gen_synpoly(spec, count, radius_px, seed, spread, distinct_colors);
        case SceneKind::ColorShape: {
            int color = -1, shape = -1;
            for (std::size_t i = 0; i < palette().size(); ++i)
                if (palette()[i].name == color_name) color = static_cast<int>(i);
            for (std::size_t i = 0; i < colorshape_shapes().size(); ++i)
                if (to_string(colorshape_shapes()[i]) == shape_name)
                    shape = static_cast<int>(i);
            check_data(color >= 0 && shape >= 0,
                       "manifest names unknown color or shape");
            return gen_colorshape(spec, seed, color, shape);
        }
    }
    throw ConfigError("unknown scene kind");
}

}  // namespace countlab
