#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dmvcl/dataset.hpp"
#include "test_helpers.hpp"

using namespace dmvcl;

namespace fs = std::filesystem;

TEST_CASE("UTIAS fixture parses field by field") {
    const auto logs = parse_utias(std::string(DMVCL_TEST_DATA_DIR) +
                                  "/utias_fixture");
    REQUIRE(logs.size() == 2);

    const RobotLog& r1 = logs[0];
    REQUIRE(r1.odometry.size() == 3);
    CHECK(r1.odometry[1].t == 0.5);
    CHECK(r1.odometry[1].v == 0.20);
    CHECK(r1.odometry[1].omega == 0.10);
    REQUIRE(r1.groundtruth.size() == 3);
    CHECK(r1.groundtruth[2].x == 1.10);
    CHECK(r1.groundtruth[2].phi == 0.50);

    // Landmark barcode 72 dropped; robot barcode 14 mapped to index 1.
    REQUIRE(r1.measurements.size() == 2);
    CHECK(r1.measurements[0].subject == 1);
    CHECK(r1.measurements[0].range == 1.25);
    CHECK(r1.measurements[0].bearing == 0.30);
    CHECK(r1.measurements[1].t == 1.0);

    SECTION("empty measurement file yields an empty stream") {
        CHECK(logs[1].measurements.empty());
        CHECK(logs[1].odometry.size() == 3);
    }
}

TEST_CASE("parser diagnostics") {
    const auto dir = fs::temp_directory_path() / "dmvcl_bad_utias";
    fs::create_directories(dir);
    const auto write = [&](const std::string& name,
                           const std::string& body) {
        std::ofstream out(dir / name);
        out << body;
    };
    write("Barcodes.dat", "1 5\n2 14\n");
    write("Robot1_Groundtruth.dat", "0.0 1 1 0\n");
    write("Robot1_Measurement.dat", "");
    write("Robot2_Odometry.dat", "0.0 0.1 0\n");
    write("Robot2_Groundtruth.dat", "0.0 1 1 0\n");
    write("Robot2_Measurement.dat", "");

    SECTION("out-of-order timestamps rejected") {
        write("Robot1_Odometry.dat", "0.0 0.1 0\n1.0 0.1 0\n0.5 0.1 0\n");
        CHECK_THROWS_AS(parse_utias(dir.string()), DataError);
    }
    SECTION("malformed line reported with position") {
        write("Robot1_Odometry.dat", "0.0 0.1 0\n0.5 0.1\n");
        try {
            parse_utias(dir.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SECTION("unmappable barcode rejected") {
        write("Robot1_Odometry.dat", "0.0 0.1 0\n");
        write("Robot1_Measurement.dat", "0.0 99 1.0 0.1\n");
        CHECK_THROWS_AS(parse_utias(dir.string()), DataError);
    }
    fs::remove_all(dir);
}

TEST_CASE("synthetic scenario generation") {
    SyntheticParams params;
    params.n_robots = 3;
    params.duration = 10.0;
    params.sensing_range = 50.0;

    SECTION("deterministic per seed") {
        const auto a = synthesize_scenario(params, 42);
        const auto b = synthesize_scenario(params, 42);
        REQUIRE(a.size() == b.size());
        REQUIRE(a[0].odometry.size() == b[0].odometry.size());
        for (std::size_t k = 0; k < a[0].odometry.size(); ++k) {
            REQUIRE(a[0].odometry[k].v == b[0].odometry[k].v);
        }
        REQUIRE(a[1].measurements.size() == b[1].measurements.size());
    }
    SECTION("zero noise gives exact odometry and measurements") {
        SyntheticParams clean = params;
        clean.odom_noise = {0.0, 0.0};
        clean.sigma_range = 0.0;
        clean.sigma_bearing = 0.0;
        const auto logs = synthesize_scenario(clean, 7);

        // Replaying the noiseless odometry from the first ground-truth
        // pose must reproduce the ground truth.
        for (const auto& log : logs) {
            AgentState pose = {log.groundtruth[0].x, log.groundtruth[0].y,
                               log.groundtruth[0].phi};
            for (std::size_t k = 1; k < log.odometry.size(); ++k) {
                pose.x += clean.dt * log.odometry[k].v * std::cos(pose.phi);
                pose.y += clean.dt * log.odometry[k].v * std::sin(pose.phi);
                pose.phi = wrap_angle(pose.phi +
                                      clean.dt * log.odometry[k].omega);
                REQUIRE(pose.x ==
                        Catch::Approx(log.groundtruth[k].x).margin(1e-9));
                REQUIRE(pose.y ==
                        Catch::Approx(log.groundtruth[k].y).margin(1e-9));
            }
        }
        // Measurements equal the exact model output.
        const auto& log = logs[0];
        for (const auto& meas : log.measurements) {
            const auto gt_i =
                detail::nearest_in_time(log.groundtruth, meas.t, 1e-9);
            const auto gt_j = detail::nearest_in_time(
                logs[meas.subject].groundtruth, meas.t, 1e-9);
            REQUIRE(gt_i);
            REQUIRE(gt_j);
            const auto& a = log.groundtruth[*gt_i];
            const auto& b = logs[meas.subject].groundtruth[*gt_j];
            const auto [range, heading] = predict_measurement(
                {a.x, a.y, a.phi}, {b.x, b.y, b.phi});
            REQUIRE(meas.range == Catch::Approx(range).margin(1e-9));
            REQUIRE(meas.bearing == Catch::Approx(heading).margin(1e-9));
        }
    }
    SECTION("measurement residual spread matches the configured sigmas") {
        SyntheticParams noisy = params;
        noisy.duration = 400.0;
        noisy.sensing_range = 1e6;
        const auto logs = synthesize_scenario(noisy, 3);
        double sum_r = 0, sum_r2 = 0, sum_b = 0, sum_b2 = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            for (const auto& meas : logs[i].measurements) {
                const auto gt_i = detail::nearest_in_time(
                    logs[i].groundtruth, meas.t, 1e-9);
                const auto gt_j = detail::nearest_in_time(
                    logs[meas.subject].groundtruth, meas.t, 1e-9);
                const auto& a = logs[i].groundtruth[*gt_i];
                const auto& b = logs[meas.subject].groundtruth[*gt_j];
                const auto [range, heading] = predict_measurement(
                    {a.x, a.y, a.phi}, {b.x, b.y, b.phi});
                const double dr = meas.range - range;
                const double db = wrap_angle(meas.bearing - heading);
                sum_r += dr;
                sum_r2 += dr * dr;
                sum_b += db;
                sum_b2 += db * db;
                ++count;
            }
        }
        REQUIRE(count >= 10000);
        const double std_r = std::sqrt(sum_r2 / count -
                                       (sum_r / count) * (sum_r / count));
        const double std_b = std::sqrt(sum_b2 / count -
                                       (sum_b / count) * (sum_b / count));
        CHECK(std_r == Catch::Approx(noisy.sigma_range).epsilon(0.10));
        CHECK(std_b == Catch::Approx(noisy.sigma_bearing).epsilon(0.10));
    }
}

TEST_CASE("training sample generation") {
    SECTION("count zero gives an empty list") {
        const auto logs = synthesize_scenario({}, 1);
        const auto report =
            generate_training_samples(logs, 0, SampleGenConfig{}, 1);
        CHECK(report.samples.empty());
    }
    SECTION("labels match an independent single-step recomputation") {
        // Deterministic error injection: with zero perturbation stds and
        // a degenerate scale range, the seeded beliefs are a pure
        // function of the (single) log measurement.
        std::vector<RobotLog> logs(2);
        logs[0].odometry = {{1.0, 0.3, 0.1}};
        logs[0].groundtruth = {{1.0, 0.0, 0.0, 0.0}};
        logs[0].measurements = {{1.0, 1, 2.1, 0.2}};
        logs[1].odometry = {{1.0, 0.2, 0.0}};
        logs[1].groundtruth = {{1.0, 2.0, 0.5, 0.3}};

        SampleGenConfig config;
        config.errors.position_std = 0.0;
        config.errors.heading_std = 0.0;
        config.errors.cov_scale_lo = config.errors.cov_scale_hi = 1.0;
        config.errors.cov_correlation = 0.0;
        const auto report = generate_training_samples(logs, 1, config, 5);
        REQUIRE(report.samples.size() == 1);

        Belief bel_i;
        bel_i.estimate = {0.0, 0.0, 0.0};
        bel_i.cov = config.errors.nominal_cov_diag.asDiagonal();
        bel_i = propagate_belief(bel_i, {0.3, 0.1, config.dt},
                                 config.odom_noise);
        Belief bel_j;
        bel_j.estimate = {2.0, 0.5, 0.3};
        bel_j.cov = config.errors.nominal_cov_diag.asDiagonal();
        const Belief updated = dmv_update(
            bel_i, bel_j, {2.1, 0.2, config.measurement_cov});

        CHECK(report.samples[0].y ==
              Catch::Approx(updated.cov.trace()).margin(1e-12));
        const Eigen::VectorXd expected_x = generate_input(
            bel_i, config.measurement_cov, bel_j.cov.trace());
        CHECK((report.samples[0].raw - expected_x).norm() < 1e-12);
    }
    SECTION("samples are finite with positive labels, deterministic") {
        const auto logs = synthesize_scenario({}, 21);
        const auto a =
            generate_training_samples(logs, 200, SampleGenConfig{}, 9);
        const auto b =
            generate_training_samples(logs, 200, SampleGenConfig{}, 9);
        REQUIRE(a.samples.size() == 200);
        for (std::size_t k = 0; k < a.samples.size(); ++k) {
            REQUIRE(a.samples[k].raw.allFinite());
            REQUIRE(a.samples[k].y > 0.0);
            REQUIRE(a.samples[k].y == b.samples[k].y);
        }
    }
}

TEST_CASE("dataset split") {
    std::mt19937_64 rng(61);
    std::vector<TrainingSample> samples(100);
    for (std::size_t k = 0; k < samples.size(); ++k) {
        samples[k].raw = Eigen::VectorXd::Constant(kFeatureCount,
                                                   static_cast<double>(k));
        samples[k].y = static_cast<double>(k) + 1.0;
    }

    SECTION("sizes, disjointness, determinism") {
        const auto a = split_dataset(samples, 70, 20, 10, 33);
        const auto b = split_dataset(samples, 70, 20, 10, 33);
        REQUIRE(a.train.size() == 70);
        REQUIRE(a.dev.size() == 20);
        REQUIRE(a.test.size() == 10);
        std::set<double> seen;
        for (const auto& s : a.train) seen.insert(s.y);
        for (const auto& s : a.dev) seen.insert(s.y);
        for (const auto& s : a.test) seen.insert(s.y);
        CHECK(seen.size() == 100);
        for (std::size_t k = 0; k < a.train.size(); ++k) {
            REQUIRE(a.train[k].y == b.train[k].y);
        }
    }
    SECTION("insufficient samples rejected") {
        CHECK_THROWS_AS(split_dataset(samples, 90, 20, 10, 1), DataError);
    }
}

TEST_CASE("sample table round trip") {
    const auto logs = synthesize_scenario({}, 77);
    const auto report =
        generate_training_samples(logs, 50, SampleGenConfig{}, 8);
    const std::string path =
        (fs::temp_directory_path() / "dmvcl_samples.txt").string();
    save_samples(report.samples, path);
    const auto loaded = load_samples(path);
    REQUIRE(loaded.size() == report.samples.size());
    for (std::size_t k = 0; k < loaded.size(); ++k) {
        REQUIRE((loaded[k].raw - report.samples[k].raw).norm() == 0.0);
        REQUIRE(loaded[k].y == report.samples[k].y);
    }
    std::remove(path.c_str());
}
