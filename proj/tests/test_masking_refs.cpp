#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lipdub/masking.hpp"
#include "lipdub/references.hpp"

#include "oracles.hpp"

using namespace lipdub;

namespace {

LandmarkSet centered_crop_landmarks(double gap = 12.0, double angle = 0.0, double scale = 0.8) {
    fixture::FramePose pose{{128.0, 120.0}, scale, angle};
    LandmarkSet lm = testutil::posed_landmarks(pose, gap);
    lm.coordinate_space = CoordSpace::crop;
    return lm;
}

PolyMask square_poly(double x0, double y0, double x1, double y1) {
    PolyMask p;
    p.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    return p;
}

std::vector<double> integrated_gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k;
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = testutil::norm_cdf((i + 0.5) / sigma) - testutil::norm_cdf((i - 0.5) / sigma);
        k.push_back(v);
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

TEST_CASE("rectangular mask pixel bounds") {
    SECTION("default mask on a 256 crop covers columns 20..236 and rows 71..244") {
        const RectPixelBounds b = rect_pixel_bounds(RectMask{}, 256, 256);
        CHECK(b.x0 == 20);
        CHECK(b.x1 == 236);
        CHECK(b.y0 == 71);
        CHECK(b.y1 == 244);
    }
    SECTION("floor/ceil rounding never undershoots the stated rectangle") {
        const RectPixelBounds b = rect_pixel_bounds(RectMask{0.05, 0.05, 0.951, 0.951}, 10, 10);
        CHECK(b.x0 == 0);
        CHECK(b.x1 == 10);
        CHECK(b.y0 == 0);
        CHECK(b.y1 == 10);
    }
    SECTION("invalid rectangles rejected") {
        CHECK_THROWS_AS(rect_pixel_bounds(RectMask{0.5, 0.1, 0.4, 0.9}, 10, 10), ValidationError);
        CHECK_THROWS_AS(rect_pixel_bounds(RectMask{-0.1, 0.1, 0.4, 0.9}, 10, 10), ValidationError);
    }
}

TEST_CASE("rect mask zeroes exactly the stated region") {
    const ImageBuf ones = ImageBuf::make(256, 256, 3, 1.0);
    const ImageBuf masked = apply_rect_mask(ones, RectMask{});

    CHECK(masked.at(71, 20, 0) == 0.0);
    CHECK(masked.at(243, 235, 2) == 0.0);
    CHECK(masked.at(70, 20, 0) == 1.0);
    CHECK(masked.at(71, 19, 0) == 1.0);
    CHECK(masked.at(244, 20, 0) == 1.0);
    CHECK(masked.at(71, 236, 0) == 1.0);

    SECTION("full-frame mask blanks everything") {
        const ImageBuf all = apply_rect_mask(ones, RectMask{0.0, 0.0, 1.0, 1.0});
        for (double v : all.data) REQUIRE(v == 0.0);
    }
    SECTION("masked region sums to zero on random input") {
        std::mt19937_64 rng(31);
        const ImageBuf img = testutil::random_image(64, 48, 3, rng);
        const RectMask m{0.2, 0.3, 0.7, 0.9};
        const ImageBuf out = apply_rect_mask(img, m);
        const RectPixelBounds b = rect_pixel_bounds(m, 64, 48);
        double inside = 0.0;
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (int c = 0; c < 3; ++c) inside += out.at(y, x, c);
        CHECK(inside == 0.0);
    }
}

TEST_CASE("reference mask is the exact complement") {
    std::mt19937_64 rng(32);
    const ImageBuf img = testutil::random_image(256, 256, 3, rng);
    const RectMask m{};
    const ImageBuf zeroed = apply_rect_mask(img, m);
    const ImageBuf kept = apply_reference_mask(img, m);

    SECTION("partition identity reassembles the input") {
        for (size_t i = 0; i < img.data.size(); ++i)
            REQUIRE(zeroed.data[i] + kept.data[i] == img.data[i]);
    }
    SECTION("interior pixel count matches the bounds arithmetic") {
        const ImageBuf ones = ImageBuf::make(256, 256, 1, 1.0);
        ImageBuf kept1 = apply_reference_mask(ones, m);
        long long nonzero = 0;
        for (double v : kept1.data) nonzero += v != 0.0;
        CHECK(nonzero == static_cast<long long>(236 - 20) * (244 - 71));
    }
    SECTION("zero image stays zero") {
        const ImageBuf z = apply_reference_mask(ImageBuf::make(16, 16, 3), m);
        for (double v : z.data) REQUIRE(v == 0.0);
    }
}

TEST_CASE("face polygon construction") {
    const LandmarkSet lm = centered_crop_landmarks();

    SECTION("symmetric landmarks give a mirror-symmetric polygon") {
        const PolyMask poly = build_face_polygon(lm, 8.0);
        const double cx = lm.get("eye_midpoint").x;
        for (const Vec2& v : poly.vertices) {
            const Vec2 mirrored{2.0 * cx - v.x, v.y};
            double best = 1e9;
            for (const Vec2& u : poly.vertices) best = std::min(best, norm(u - mirrored));
            CHECK(best < 1e-9);
        }
    }
    SECTION("chin shift lowers the deepest vertex by exactly its value") {
        const PolyMask a = build_face_polygon(lm, 0.0);
        const PolyMask b = build_face_polygon(lm, 10.0);
        double ymax_a = -1e9, ymax_b = -1e9;
        for (const Vec2& v : a.vertices) ymax_a = std::max(ymax_a, v.y);
        for (const Vec2& v : b.vertices) ymax_b = std::max(ymax_b, v.y);
        CHECK(ymax_b - ymax_a == Catch::Approx(10.0).margin(1e-12));
    }
    SECTION("near-profile views still produce a valid polygon") {
        LandmarkSet prof = lm;
        const Vec2 le = lm.get("left_ear"), re = lm.get("right_ear");
        prof.set("left_ear", 0.5 * (le + re) + Vec2{-0.3, 0.0});
        prof.set("right_ear", 0.5 * (le + re) + Vec2{0.3, 0.0});
        const PolyMask poly = build_face_polygon(prof, 8.0);
        CHECK(poly.vertices.size() >= 3);
        CHECK_NOTHROW(poly.validate());
    }
    SECTION("collinear landmark degenerate case is reported") {
        LandmarkSet flat;
        for (const char* name : {"left_ear", "right_ear", "nose_tip", "nose_bridge_mid",
                                 "chin_left", "chin_center", "chin_right"}) {
            const double x = static_cast<double>(flat.points.size());
            flat.set(name, {x, 2.0 * x});
        }
        CHECK_THROWS_WITH(build_face_polygon(flat, 0.0),
                          Catch::Matchers::ContainsSubstring("degenerate_polygon"));
    }
    SECTION("missing landmark is named") {
        LandmarkSet partial = lm;
        partial.points.erase("nose_tip");
        CHECK_THROWS_WITH(build_face_polygon(partial, 0.0),
                          Catch::Matchers::ContainsSubstring("nose_tip"));
    }
}

TEST_CASE("feathered rasterization") {
    SECTION("sigma 0 keeps the hard edge") {
        const ImageBuf m = rasterize_feathered(square_poly(10.0, 10.0, 40.0, 40.0), 64, 64, 0.0);
        for (double v : m.data) REQUIRE((v == 0.0 || v == 1.0));
        CHECK(m.at(25, 25) == 1.0);
        CHECK(m.at(5, 5) == 0.0);
        CHECK(m.at(10, 10) == 1.0);  // boundary counts as inside
    }
    SECTION("deep interior saturates to one") {
        const ImageBuf m = rasterize_feathered(square_poly(20.0, 20.0, 200.0, 200.0), 224, 224, 3.0);
        CHECK(m.at(110, 110) == Catch::Approx(1.0).margin(1e-6));
        CHECK(m.at(30, 110) == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("straight-edge profile follows the Gaussian CDF within 1e-3") {
        const double sigma = 2.0;
        // Left polygon edge between pixel columns 30 and 31.
        const ImageBuf m =
            rasterize_feathered(square_poly(30.5, -100.0, 230.0, 340.0), 240, 240, sigma);
        const int y = 120;
        double prev = -1.0;
        for (int x = 15; x < 46; ++x) {
            const double expected = testutil::norm_cdf((x - 30.5) / sigma);
            CHECK(std::abs(m.at(y, x) - expected) < 1e-3);
            CHECK(m.at(y, x) >= prev);  // monotone across the edge
            prev = m.at(y, x);
        }
    }
    SECTION("separable blur agrees with a dense 2-D convolution") {
        std::mt19937_64 rng(77);
        const ImageBuf img = testutil::random_image(20, 23, 1, rng);
        const ImageBuf fast = detail::gaussian_blur_zero_pad(img, 1.7);
        const auto dense =
            testutil::conv2d_zero_oracle(img.data, 20, 23, integrated_gaussian_kernel(1.7));
        double worst = 0.0;
        for (size_t i = 0; i < dense.size(); ++i)
            worst = std::max(worst, std::abs(dense[i] - fast.data[i]));
        CHECK(worst < 1e-12);
    }
    SECTION("negative sigma rejected") {
        CHECK_THROWS_AS(rasterize_feathered(square_poly(0, 0, 5, 5), 8, 8, -1.0), ValidationError);
    }
}

TEST_CASE("composite blends with a single-channel weight") {
    const ImageBuf a = ImageBuf::make(4, 4, 3, 0.8);
    const ImageBuf b = ImageBuf::make(4, 4, 3, 0.2);
    ImageBuf m = ImageBuf::make(4, 4, 1, 0.0);
    m.at(1, 1) = 1.0;
    m.at(2, 2) = 0.5;
    const ImageBuf out = composite(a, b, m);
    CHECK(out.at(0, 0, 0) == 0.2);
    CHECK(out.at(1, 1, 1) == 0.8);
    CHECK(out.at(2, 2, 2) == Catch::Approx(0.5).margin(1e-12));
    CHECK_THROWS_AS(composite(a, b, ImageBuf::make(3, 4, 1)), ValidationError);
}

TEST_CASE("rect mask coverage check") {
    const LandmarkSet lm = centered_crop_landmarks();
    CHECK(rect_mask_covers(RectMask{}, lm, 256, 256, 0.25));
    CHECK_FALSE(rect_mask_covers(RectMask{0.4, 0.4, 0.6, 0.6}, lm, 256, 256, 0.25));
    // Large enough area but the jaw pokes out of a mask ending above the chin.
    CHECK_FALSE(rect_mask_covers(RectMask{0.08, 0.28, 0.92, 0.62}, lm, 256, 256, 0.25));
}

TEST_CASE("frame features encode mouth shape and head roll") {
    const LandmarkSet lm = centered_crop_landmarks();
    const auto f = frame_features(lm);
    REQUIRE(f.size() == 27);

    SECTION("identical landmarks give identical vectors") {
        CHECK(frame_features(centered_crop_landmarks()) == f);
    }
    SECTION("a 10 degree rotation moves the roll component by pi/18") {
        const LandmarkSet rotated = centered_crop_landmarks(12.0, M_PI / 18.0);
        const auto g = frame_features(rotated);
        CHECK(std::abs((g[26] - f[26]) - M_PI / 18.0) < 1e-6);
    }
    SECTION("coordinates are crop normalized") {
        for (size_t i = 0; i < 26; ++i) {
            CHECK(f[i] > 0.0);
            CHECK(f[i] < 1.0);
        }
    }
}

TEST_CASE("k-means reference selection") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SECTION("k=10 over 200 frames returns 10 unique sorted indices, target excluded") {
        std::vector<std::vector<double>> features;
        for (int i = 0; i < 200; ++i) {
            std::vector<double> f(27);
            for (auto& v : f) v = u(rng);
            features.push_back(f);
        }
        const RefSelection sel = select_references_kmeans(features, 10, 99, 42);
        REQUIRE(sel.indices.size() == 10);
        CHECK_NOTHROW(sel.validate(10));
        for (int idx : sel.indices) CHECK(idx != 42);
    }
    SECTION("small tracks return every non-excluded frame") {
        std::vector<std::vector<double>> features(5, std::vector<double>{0.0});
        for (int i = 0; i < 5; ++i) features[i][0] = i;
        const RefSelection sel = select_references_kmeans(features, 10, 7, 2);
        CHECK(sel.indices == std::vector<int>{0, 1, 3, 4});
    }
    SECTION("two separated blobs with k=2 pick one frame from each") {
        std::vector<std::vector<double>> features;
        for (int i = 0; i < 6; ++i)
            features.push_back({0.1 * u(rng), 0.1 * u(rng)});
        for (int i = 0; i < 6; ++i)
            features.push_back({10.0 + 0.1 * u(rng), 10.0 + 0.1 * u(rng)});
        const RefSelection sel = select_references_kmeans(features, 2, 5);
        REQUIRE(sel.indices.size() == 2);
        CHECK(sel.indices[0] < 6);
        CHECK(sel.indices[1] >= 6);

        const KMeansResult km = kmeans_cluster(features, 2, 5);
        CHECK(km.wcss == Catch::Approx(testutil::exhaustive_min_wcss(features, 2)).margin(1e-9));
    }
    SECTION("restarted objective never loses to single restarts") {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 40; ++i) pts.push_back({u(rng), u(rng), u(rng)});
        const double multi = kmeans_cluster(pts, 4, 11).wcss;
        for (uint64_t s = 0; s < 10; ++s)
            CHECK(multi <= kmeans_cluster(pts, s * 131 + 7, 100, 1e-6, 1).wcss + 1e-12);
    }
    SECTION("empty candidate set is an error") {
        std::vector<std::vector<double>> one(1, std::vector<double>{0.5});
        CHECK_THROWS_AS(select_references_kmeans(one, 3, 0, 0), ValidationError);
    }
}

TEST_CASE("baseline reference strategies") {
    SECTION("first-k skips the excluded target") {
        const RefSelection sel = select_references_baseline(20, 1, BaselineStrategy::first, 0, 0);
        CHECK(sel.indices == std::vector<int>{1});
    }
    SECTION("uniform spreads indices at near-equal gaps") {
        const RefSelection sel =
            select_references_baseline(100, 10, BaselineStrategy::uniform, 0, 50);
        REQUIRE(sel.indices.size() == 10);
        for (int idx : sel.indices) CHECK(idx != 50);
        for (size_t i = 0; i + 1 < sel.indices.size(); ++i) {
            const int gap = sel.indices[i + 1] - sel.indices[i];
            CHECK(gap >= 9);
            CHECK(gap <= 11);
        }
    }
    SECTION("random draws are deterministic per seed") {
        const RefSelection a = select_references_baseline(60, 8, BaselineStrategy::random, 77, 5);
        const RefSelection b = select_references_baseline(60, 8, BaselineStrategy::random, 77, 5);
        const RefSelection c = select_references_baseline(60, 8, BaselineStrategy::random, 78, 5);
        CHECK(a.indices == b.indices);
        CHECK(a.indices != c.indices);
        for (int idx : a.indices) CHECK(idx != 5);
    }
    SECTION("k clamps to n_frames - 1") {
        const RefSelection sel = select_references_baseline(4, 10, BaselineStrategy::first, 0, 1);
        CHECK(sel.indices == std::vector<int>{0, 2, 3});
    }
    SECTION("no strategy ever returns the excluded frame") {
        for (auto strategy :
             {BaselineStrategy::first, BaselineStrategy::random, BaselineStrategy::uniform})
            for (int exclude : {0, 7, 19}) {
                const RefSelection sel =
                    select_references_baseline(20, 6, strategy, 3, exclude);
                for (int idx : sel.indices) REQUIRE(idx != exclude);
            }
    }
}

TEST_CASE("selection diversity: clustering beats first-k on a pose sweep") {
    // Pose sweep: the head rolls and the mouth opens across the track, so the
    // first frames are all alike while clustering can spread out.
    std::vector<std::vector<double>> features;
    for (int i = 0; i < 120; ++i) {
        const double phase = i / 119.0;
        const LandmarkSet lm = centered_crop_landmarks(
            4.0 + 20.0 * (0.5 + 0.5 * std::sin(2.0 * M_PI * 3.0 * phase)),
            0.25 * std::sin(2.0 * M_PI * phase), 0.8);
        features.push_back(frame_features(lm));
    }
    const RefSelection km = select_references_kmeans(features, 10, 3);
    const RefSelection first = select_references_baseline(120, 10, BaselineStrategy::first, 3);
    CHECK(selection_diversity(features, km.indices) >=
          selection_diversity(features, first.indices));
}

TEST_CASE("reference selection validation") {
    RefSelection sel;
    sel.indices = {3, 1};
    CHECK_THROWS_AS(sel.validate(5), ValidationError);
    sel.indices = {1, 3};
    sel.excluded_target = 3;
    CHECK_THROWS_AS(sel.validate(5), ValidationError);
    sel.excluded_target = 2;
    CHECK_NOTHROW(sel.validate(5));
    CHECK_THROWS_AS(sel.validate(1), ValidationError);
}
