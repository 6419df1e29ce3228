import math
from dataclasses import replace

import numpy as np
import pytest

from positioning.services.beamtraining import (
    GolayTrn,
    LosLikelihoodReport,
    SweepPlan,
    beam_search,
    combine_pdps,
    estimate_departure,
    evaluate_candidate,
    fine_candidates,
    fpbt,
    likelihood_from_powers,
    los_assessment,
    main_tap,
    pdp_quality,
)
from positioning.services.channel import (
    ArrayConfig,
    AwvConfig,
    Blocker,
    ElementPattern,
    Geometry,
    Pdp,
    Room,
    SimChannel,
    array_gain,
)
from positioning.services.exceptions import BeamTrainingError, EmptyGroup, EmptyPdp
from positioning.services.frames import TrnConfig
from positioning.services.geometry import Position, angle_difference
from positioning.services.scenario import fig4a_scenario


def channel_for(geometry, tx, rx, snr_db=None):
    return SimChannel.between(geometry, tx, rx, ArrayConfig(element_pattern=ElementPattern.CARDIOID),
                              snr_db=snr_db)


def random_link(rng):
    room = Room(12.0, 9.0, 3.0)
    ista = Position(float(rng.uniform(1, 11)), float(rng.uniform(1, 8)), 1.0)
    while True:
        rsta = Position(float(rng.uniform(1, 11)), float(rng.uniform(1, 8)), 1.0)
        if ista.distance_to(rsta) > 1.5:
            return Geometry(room, {'ista': ista, 'rsta': rsta})


def blocked_link(rng):
    """A random link with a 0.6 m partition across the middle of the direct path"""
    geometry = random_link(rng)
    ista, rsta = geometry.position('ista'), geometry.position('rsta')
    length = ista.distance_to(rsta)
    ux, uy = (rsta.x_m - ista.x_m) / length, (rsta.y_m - ista.y_m) / length
    mx, my = (ista.x_m + rsta.x_m) / 2, (ista.y_m + rsta.y_m) / 2
    blocker = Blocker(mx - 0.3 * uy, my + 0.3 * ux, mx + 0.3 * uy, my - 0.3 * ux)
    return replace(geometry, blockers=(blocker,))


class TestPdpProcessing:
    def test_group_of_one(self):
        pdp = Pdp(((0, 1.0, 0.0, 30.0),))
        assert combine_pdps([pdp]) is pdp

    def test_identical_pdps(self):
        pdp = Pdp(((0, 1.0, 0.0, 30.0),))
        combined = combine_pdps([pdp, pdp])
        tap = combined.taps[0]
        assert (tap.i_component, tap.q_component) == (1.0, 0.0)
        assert tap.snr_db == pytest.approx(30.0 + 10 * math.log10(2))

    def test_disjoint_delays_are_halved(self):
        combined = combine_pdps([Pdp(((0, 1.0, 0.0, 30.0),)), Pdp(((5, 0.0, 1.0, 30.0),))])
        assert [t.delay_sample_index for t in combined.taps] == [0, 5]
        assert combined.tap_at(0).i_component == 0.5
        assert combined.tap_at(5).q_component == 0.5

    def test_empty_group(self):
        with pytest.raises(EmptyGroup):
            combine_pdps([])

    def test_quality_examples(self):
        assert pdp_quality(Pdp(((0, 1.0, 0.0, 30.0),))) == 1.0
        assert pdp_quality(Pdp(((0, 1.0, 0.0, 30.0), (1, 1.0, 0.0, 30.0)))) == 0.5
        assert pdp_quality(Pdp(((1, 1.0, 0.0, 30.0), (3, 2.0, 0.0, 30.0), (5, 0.0, 1.0, 30.0)))) \
            == pytest.approx(4 / 3)

    def test_first_path_preference(self):
        pdp = Pdp(((2, 0.8, 0.0, 30.0), (6, 1.0, 0.0, 30.0)))
        assert main_tap(pdp).delay_sample_index == 2
        assert main_tap(pdp, first_path=False).delay_sample_index == 6

    def test_main_tap_of_empty_pdp(self):
        with pytest.raises(EmptyPdp):
            main_tap(Pdp())


class TestSweepPlan:
    def test_groups_map_to_consecutive_m_subfields(self):
        plan = SweepPlan.build(fine_candidates(0.0, 15.0, 2.5), awv_group_size=2)
        assert plan.trn.total_subfields == 28
        assert plan.subfields_for(4) == [8, 9]
        assert plan.group_assignment[9] == 4

    def test_p_subfields_are_skipped(self):
        candidates = (AwvConfig(0, 0.0), AwvConfig(1, 10.0))
        plan = SweepPlan.build(candidates, awv_group_size=2, m_subfields=2, p_subfields=1)
        assert plan.subfields_for(0) == [1, 2]
        assert plan.subfields_for(1) == [4, 5]

    def test_candidates_must_fit(self):
        with pytest.raises(BeamTrainingError):
            SweepPlan((AwvConfig(0, 0.0), AwvConfig(1, 5.0), AwvConfig(2, 10.0)), TrnConfig(1, 0, 4, 2))

    def test_unique_ids(self):
        with pytest.raises(BeamTrainingError):
            SweepPlan.build((AwvConfig(0, 0.0), AwvConfig(0, 5.0)))


class TestFpbt:
    def test_true_bearing_is_selected(self, open_room):
        channel = channel_for(open_room, 'ista', 'rsta')
        candidates = tuple(AwvConfig(i, offset) for i, offset in enumerate((-20.0, -10.0, 0.0, 10.0, 20.0)))
        result = fpbt(channel, SweepPlan.build(candidates), GolayTrn(), seed=1)
        assert result.awv.steer_azimuth_deg == 0.0

    def test_duplicate_candidates_lowest_id_wins(self, open_room):
        channel = channel_for(open_room, 'ista', 'rsta')
        candidates = (AwvConfig(5, 30.0), AwvConfig(2, 0.0), AwvConfig(7, 0.0))
        result = fpbt(channel, SweepPlan.build(candidates), GolayTrn(), seed=1)
        assert result.awv.awv_id == 2
        assert result.qualities[2] == result.qualities[7]

    @pytest.mark.parametrize('snr_db', [None, 15.0])
    def test_matches_brute_force(self, snr_db):
        rng = np.random.default_rng(99)
        waveform = GolayTrn()
        for trial in range(100):
            channel = channel_for(random_link(rng), 'ista', 'rsta', snr_db)
            center = channel.taps[0].departure[0] + float(rng.uniform(-20, 20))
            plan = SweepPlan.build(fine_candidates(center, 15.0, 2.5))
            seed = int(rng.integers(0, 2 ** 32))
            result = fpbt(channel, plan, waveform, seed)
            scores = [evaluate_candidate(channel, plan, waveform, seed, i)[0] for i in range(len(plan.candidates))]
            best = max(range(len(scores)), key=lambda i: (scores[i], -plan.candidates[i].awv_id))
            assert result.awv == plan.candidates[best]

    def test_common_scaling_keeps_the_selection(self, open_room):
        channel = channel_for(open_room, 'ista', 'rsta')
        scaled = replace(channel, taps=tuple(replace(t, gain_co=t.gain_co * 3, gain_cross=t.gain_cross * 3)
                                             for t in channel.taps))
        plan = SweepPlan.build(fine_candidates(0.0, 15.0, 2.5))
        assert fpbt(channel, plan, GolayTrn(), 3).awv == fpbt(scaled, plan, GolayTrn(), 3).awv

    def test_beam_search_finds_the_direct_path(self):
        config = fig4a_scenario()
        for spec in config.rsta_specs:
            if not spec.is_los:
                continue
            channel = channel_for(config.geometry, 'ista', spec.label)
            search = beam_search(channel, GolayTrn(), seed=4)
            bearing = channel.taps[0].departure[0]
            assert abs(angle_difference(search.fine.awv.steer_azimuth_deg, bearing)) <= 1.25 + 1e-9


class TestLosAssessment:
    def test_likelihood_limits(self):
        assert likelihood_from_powers(1.0, 0.0) >= 1 - 1e-9
        assert likelihood_from_powers(0.5, 0.5) == pytest.approx(0.5)

    def test_likelihood_is_monotone(self):
        assert likelihood_from_powers(2.0, 1.0) > likelihood_from_powers(1.0, 1.0)
        assert likelihood_from_powers(1.0, 2.0) < likelihood_from_powers(1.0, 1.0)

    def test_report_range(self):
        with pytest.raises(BeamTrainingError):
            LosLikelihoodReport(1.0, 0.0, 1.5)

    def test_direct_path_has_no_cross_polar_power(self, open_room):
        channel = channel_for(open_room, 'ista', 'rsta')
        report = los_assessment(channel, AwvConfig(0, 0.0), GolayTrn(), seed=1)
        assert report.p_main_crosspol == 0.0
        assert report.is_los

    def test_reflected_first_path_is_nlos(self):
        config = fig4a_scenario()
        channel = channel_for(config.geometry, 'ista', 'nlos-4m')
        first = channel.taps[0]
        report = los_assessment(channel, AwvConfig(0, first.departure[0]), GolayTrn(), seed=1)
        assert not report.is_los

    def test_classification_at_30_db(self, open_room):
        channel = channel_for(open_room, 'ista', 'rsta', snr_db=30.0)
        for seed in range(100):
            assert los_assessment(channel, AwvConfig(0, 0.0), GolayTrn(), seed).likelihood >= 0.99

    def test_classification_of_the_room_scenario(self):
        config = fig4a_scenario()
        for snr_db, seeds in ((None, 1), (15.0, 30)):
            correct = total = 0
            for spec in config.rsta_specs:
                channel = channel_for(config.geometry, 'ista', spec.label, snr_db)
                awv = AwvConfig(0, channel.taps[0].departure[0])
                for seed in range(seeds):
                    correct += los_assessment(channel, awv, GolayTrn(), seed).is_los == spec.is_los
                    total += 1
            assert correct >= (1.0 if snr_db is None else 0.95) * total


    @pytest.mark.parametrize('snr_db, required', [(None, 1.0), (15.0, 0.95)])
    def test_classification_of_random_geometries(self, snr_db, required):
        rng = np.random.default_rng(2024)
        correct = 0
        for trial in range(200):
            is_los = trial % 2 == 0
            geometry = random_link(rng) if is_los else blocked_link(rng)
            channel = channel_for(geometry, 'ista', 'rsta', snr_db)
            awv = AwvConfig(0, channel.taps[0].departure[0])
            report = los_assessment(channel, awv, GolayTrn(), int(rng.integers(0, 2 ** 32)))
            correct += report.is_los == is_los
        assert correct >= required * 200


class TestDepartureEstimate:
    def test_noiseless_amplitudes_give_the_exact_angle(self):
        array = ArrayConfig(element_pattern=ElementPattern.CARDIOID)
        truth = 7.3
        awvs = [AwvConfig(i, az) for i, az in enumerate((7.5, 5.0, 10.0))]
        measurements = [(awv, Pdp(((12, 0.01 * abs(array_gain(array, awv, (truth, 0.0))), 0.0, 40.0),)))
                        for awv in awvs]
        estimate = estimate_departure(array, measurements, 12, 2.5)
        assert estimate.azimuth_deg == pytest.approx(truth, abs=1e-6)

    def test_single_measurement_returns_the_steering(self):
        array = ArrayConfig()
        estimate = estimate_departure(array, [(AwvConfig(0, 12.5), Pdp(((3, 1.0, 0.0, 20.0),)))], 3, 2.5)
        assert estimate.azimuth_deg == 12.5

    def test_missing_main_tap(self):
        with pytest.raises(EmptyPdp):
            estimate_departure(ArrayConfig(), [(AwvConfig(0, 0.0), Pdp(((3, 1.0, 0.0, 20.0),)))], 4, 2.5)
