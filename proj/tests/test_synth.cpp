#include <set>

#include "countlab/common.hpp"
#include "countlab/dataset.hpp"
#include "countlab/image.hpp"
#include "countlab/scene.hpp"
#include "doctest.h"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace countlab;

namespace {

// White canvas with the mask's object stamped in black, so the oracle's
// background convention (white) applies.
Image mask_on_white(const Image& mask) {
    Image img(mask.width, mask.height, 1, 255);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(x, y, 0) != 0) img.at(x, y, 0) = 0;
    return img;
}

}  // namespace

TEST_CASE("syndot object count matches a connected-component count") {
    CanvasSpec spec{64, 8};
    for (int count : {0, 1, 2, 3, 4, 5, 6}) {
        for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
            RenderedScene s = gen_syndot(spec, count, 2, seed);
            CHECK(s.count() == count);
            CHECK(oracle::count_components(s.image) == count);
        }
    }
    // fatter dots, sparser placement
    for (int count : {1, 3, 5}) {
        RenderedScene s = gen_syndot(spec, count, 5, 77, 2);
        CHECK(oracle::count_components(s.image) == count);
    }
}

TEST_CASE("synpoly object count matches a connected-component count") {
    CanvasSpec spec{64, 8};
    for (int count : {1, 2, 3, 4}) {
        for (std::uint64_t seed : {10ull, 11ull, 12ull}) {
            RenderedScene s = gen_synpoly(spec, count, 5, seed, 2);
            CHECK(s.count() == count);
            CHECK(oracle::count_components(s.image) == count);
        }
    }
    RenderedScene s = gen_synpoly(spec, 4, 5, 5, 2, true);
    CHECK(oracle::count_components(s.image) == 4);
    std::set<std::string> colors;
    for (const auto& o : s.objects) colors.insert(o.color_name);
    CHECK(colors.size() == 4);  // distinct_colors draws without replacement
}

TEST_CASE("polygon side counts are recoverable from rendered masks") {
    CanvasSpec spec{64, 8};
    for (Shape shape : {Shape::Triangle, Shape::Square, Shape::Pentagon, Shape::Hexagon}) {
        for (double rot : {0.0, 0.3, 0.7, 1.1}) {
            ObjectAttr attr;
            attr.shape = shape;
            attr.cx = 32;
            attr.cy = 32;
            attr.radius = 12;
            attr.rotation = rot;
            Image img = mask_on_white(instance_mask(spec, attr));
            CHECK(oracle::polygon_sides_from_image(img) == polygon_sides(shape));
        }
    }
}

TEST_CASE("single-object synpoly scenes show the declared shape") {
    CanvasSpec spec{64, 8};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RenderedScene s = gen_synpoly(spec, 1, 12, seed, 4);
        REQUIRE(s.count() == 1);
        int expect = polygon_sides(s.objects[0].shape);
        REQUIRE(expect >= 3);
        CHECK(oracle::polygon_sides_from_image(s.image) == expect);
    }
}

TEST_CASE("scene generation is seed-deterministic") {
    CanvasSpec spec{64, 8};
    RenderedScene a = gen_syndot(spec, 4, 2, 123);
    RenderedScene b = gen_syndot(spec, 4, 2, 123);
    CHECK(a.image.data == b.image.data);
    RenderedScene c = gen_syndot(spec, 4, 2, 124);
    CHECK(a.image.data != c.image.data);

    RenderedScene p = gen_synpoly(spec, 3, 5, 9, 2);
    RenderedScene q = gen_synpoly(spec, 3, 5, 9, 2);
    CHECK(p.image.data == q.image.data);
}

TEST_CASE("focus prior normalizes and concentrates on object patches") {
    CanvasSpec spec{64, 8};
    RenderedScene s = gen_syndot(spec, 1, 2, 3);
    Eigen::VectorXd g = focus_prior(s, 0.5);
    REQUIRE(g.size() == spec.patches());
    CHECK(std::fabs(g.sum() - 1.0) < 1e-12);
    CHECK(g.minCoeff() >= 0.0);
    Eigen::Index peak = 0;
    g.maxCoeff(&peak);
    std::vector<int> owned = scene_object_patches(s);
    CHECK(std::find(owned.begin(), owned.end(), static_cast<int>(peak)) != owned.end());

    RenderedScene empty = gen_syndot(spec, 0, 2, 3);
    Eigen::VectorXd u = focus_prior(empty, 1.0);
    for (Eigen::Index i = 0; i < u.size(); ++i)
        CHECK(std::fabs(u(i) - 1.0 / spec.patches()) < 1e-12);
}

TEST_CASE("netpbm files roundtrip") {
    std::string dir = fresh_dir("netpbm");
    CanvasSpec spec{64, 8};
    RenderedScene gray = gen_syndot(spec, 3, 2, 1);
    RenderedScene color = gen_synpoly(spec, 2, 5, 1, 2);
    for (const Image& img : {gray.image, color.image}) {
        std::string path = dir + "/img." + netpbm_extension(img);
        write_netpbm(img, path);
        Image back = read_netpbm(path);
        CHECK(back == img);
    }
}

TEST_CASE("counterfactual pairs share their object prefix") {
    CanvasSpec spec{64, 8};
    CounterfactualPair pair = make_pair(spec, SceneKind::SynDot, 4, 2, 2, 55);
    REQUIRE(pair.clean.count() == 4);
    REQUIRE(pair.corrupted.count() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(pair.clean.objects[i].cx == pair.corrupted.objects[i].cx);
        CHECK(pair.clean.objects[i].cy == pair.corrupted.objects[i].cy);
    }
    CHECK(pair.clean.image.data != pair.corrupted.image.data);
    CHECK(oracle::count_components(pair.clean.image) == 4);
    CHECK(oracle::count_components(pair.corrupted.image) == 2);
}

TEST_CASE("datasets write, verify, and read back equal") {
    std::string dir = fresh_dir("dataset") + "/train";
    GenConfig cfg;
    cfg.count_lo = 1;
    cfg.count_hi = 3;
    cfg.per_count = 2;
    cfg.seed = 7;
    Dataset ds = build_count_dataset(cfg);
    REQUIRE(ds.records.size() == 6);
    write_dataset(ds, dir);
    CHECK(verify_regeneration(dir).empty());

    Dataset back = read_dataset(dir);
    REQUIRE(back.records.size() == ds.records.size());
    REQUIRE(back.scenes.size() == ds.scenes.size());
    CHECK(back.meta.master_seed == ds.meta.master_seed);
    for (std::size_t i = 0; i < ds.scenes.size(); ++i)
        CHECK(back.scenes[i].image == ds.scenes[i].image);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(back.records[i].id == ds.records[i].id);
        CHECK(back.records[i].answer_words == ds.records[i].answer_words);
    }
}

TEST_CASE("colorshape datasets cover both question kinds and verify") {
    std::string dir = fresh_dir("colorshape") + "/cs";
    Dataset ds = build_colorshape_dataset(CanvasSpec{64, 8}, 8, 3);
    REQUIRE(ds.records.size() == 8);
    int colors = 0, shapes = 0;
    for (const auto& r : ds.records) {
        colors += r.task == Task::Color;
        shapes += r.task == Task::Shape;
    }
    CHECK(colors == 4);
    CHECK(shapes == 4);
    write_dataset(ds, dir);
    CHECK(verify_regeneration(dir).empty());
}

TEST_CASE("pair corpora roundtrip through disk") {
    std::string dir = fresh_dir("pairs") + "/p";
    CanvasSpec spec{64, 8};
    auto pairs = build_pairs(spec, SceneKind::SynDot, 5, 1, 5, 2, 11);
    REQUIRE(pairs.size() == 5);
    for (const auto& p : pairs) CHECK(p.clean.count() != p.corrupted.count());
    write_pairs(pairs, spec, SceneKind::SynDot, 2, 1, dir);
    auto back = read_pairs(dir);
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(back[i].clean.image == pairs[i].clean.image);
        CHECK(back[i].corrupted.image == pairs[i].corrupted.image);
        CHECK(back[i].seed == pairs[i].seed);
    }
}

TEST_CASE("instance patches match a direct pixel count") {
    CanvasSpec spec{64, 8};
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        RenderedScene s = gen_synpoly(spec, 3, 5, seed, 2);
        for (const ObjectAttr& attr : s.objects) {
            Image mask = instance_mask(spec, attr);
            for (int min_px : {1, 3}) {
                std::vector<int> got = instance_patches(spec, attr, min_px);
                std::vector<int> expect;
                for (int p = 0; p < spec.patches(); ++p)
                    if (oracle::mask_pixels_in_patch(mask, spec.patch_px, p) >= min_px)
                        expect.push_back(p);
                CHECK(got == expect);
            }
        }
    }
}

TEST_CASE("scene object patches union the per-object patches") {
    CanvasSpec spec{64, 8};
    RenderedScene s = gen_syndot(spec, 4, 5, 21, 2);
    std::set<int> expect;
    for (const ObjectAttr& attr : s.objects)
        for (int p : instance_patches(spec, attr)) expect.insert(p);
    std::vector<int> got = scene_object_patches(s);
    CHECK(std::set<int>(got.begin(), got.end()) == expect);
    CHECK(std::is_sorted(got.begin(), got.end()));
}

TEST_CASE("canvas spec validation rejects bad geometry") {
    CHECK_THROWS_AS((CanvasSpec{63, 8}.validate()), ConfigError);
    CHECK_THROWS_AS((CanvasSpec{64, 0}.validate()), ConfigError);
    CHECK_NOTHROW((CanvasSpec{64, 8}.validate()));
    // more objects than grid sites cannot be placed
    CHECK_THROWS_AS((CanvasSpec{16, 8}.validate(5)), ConfigError);
    CHECK_NOTHROW((CanvasSpec{16, 8}.validate(4)));
}
