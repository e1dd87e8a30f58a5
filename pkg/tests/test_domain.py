"""Entity invariants, the record lifecycle machine, and permission rules."""

import pytest
from hypothesis import given, strategies as st

from labelforge.domain import (
    Action,
    ALMethod,
    Coder,
    ProjectSettings,
    RecordEvent,
    RecordStatus,
    Role,
    check_permission,
    legal_events,
    transition_record_status,
    validate_project_config,
)
from labelforge.errors import IllegalTransition
from labelforge.ingest import UploadRow


class TestStateMachine:
    def test_main_labeling_path(self):
        status = RecordStatus.UNLABELED
        for event, expected in [
            (RecordEvent.SELECT_INTO_BATCH, RecordStatus.IN_BATCH),
            (RecordEvent.ASSIGN, RecordStatus.ASSIGNED),
            (RecordEvent.LABEL, RecordStatus.LABELED),
        ]:
            status = transition_record_status(status, event)
            assert status is expected

    def test_skip_goes_to_adjudication(self):
        assert (
            transition_record_status(RecordStatus.ASSIGNED, RecordEvent.SKIP)
            is RecordStatus.PENDING_SKIP_ADJUDICATION
        )

    def test_lease_expiry_returns_to_batch(self):
        assert (
            transition_record_status(RecordStatus.ASSIGNED, RecordEvent.LEASE_EXPIRED)
            is RecordStatus.IN_BATCH
        )

    def test_adjudication_paths(self):
        for pending in (
            RecordStatus.PENDING_SKIP_ADJUDICATION,
            RecordStatus.PENDING_IRR_ADJUDICATION,
        ):
            assert transition_record_status(pending, RecordEvent.ADJUDICATE) is RecordStatus.LABELED
            assert transition_record_status(pending, RecordEvent.DISCARD) is RecordStatus.DISCARDED

    def test_discarded_is_terminal(self):
        for event in RecordEvent:
            with pytest.raises(IllegalTransition):
                transition_record_status(RecordStatus.DISCARDED, event)

    def test_illegal_transition_examples(self):
        with pytest.raises(IllegalTransition):
            transition_record_status(RecordStatus.DISCARDED, RecordEvent.ASSIGN)
        with pytest.raises(IllegalTransition):
            transition_record_status(RecordStatus.LABELED, RecordEvent.LABEL)
        with pytest.raises(IllegalTransition):
            transition_record_status(RecordStatus.UNLABELED, RecordEvent.SKIP)

    @given(st.lists(st.sampled_from(list(RecordEvent)), max_size=30))
    def test_terminality_over_random_event_sequences(self, events):
        """Once discarded, no event sequence ever leaves the state."""
        status = RecordStatus.UNLABELED
        seen_discard = False
        for event in events:
            try:
                status = transition_record_status(status, event)
            except IllegalTransition:
                continue
            if seen_discard:
                pytest.fail("state changed after reaching discarded")
            if status is RecordStatus.DISCARDED:
                seen_discard = True

    def test_every_nonterminal_state_can_be_discarded(self):
        for status in RecordStatus:
            if status is RecordStatus.DISCARDED:
                continue
            assert RecordEvent.DISCARD in legal_events(status)


class TestPermissions:
    def test_coder_base_permissions(self):
        assert check_permission(Role.CODER, Action.ANNOTATE)
        assert check_permission(Role.CODER, Action.VIEW_HISTORY)

    def test_coder_denied_privileged_actions(self):
        for action in (Action.DISCARD, Action.ADJUDICATE_IRR, Action.ADMIN_LABEL, Action.EXPORT):
            assert not check_permission(Role.CODER, action)

    def test_admin_allowed_everything(self):
        for action in Action:
            assert check_permission(Role.ADMIN, action)

    def test_unknown_action_denied(self):
        assert not check_permission(Role.ADMIN, "reboot")
        assert not check_permission(Role.CODER, "reboot")

    def test_matrix_is_monotone(self):
        """Everything a coder may do, an admin may do."""
        for action in Action:
            if check_permission(Role.CODER, action):
                assert check_permission(Role.ADMIN, action)

    def test_accepts_coder_objects(self):
        admin = Coder(id="1", username="a", role=Role.ADMIN)
        assert check_permission(admin, Action.EXPORT)


class TestProjectValidation:
    def test_valid_project(self):
        rows = [UploadRow(text=f"t{i}", upload_order=i) for i in range(10)]
        assert validate_project_config("p", ["pos", "neg"], ProjectSettings(), rows) == []

    def test_single_label_rejected(self):
        errors = validate_project_config("p", ["pos"], ProjectSettings())
        assert any("fewer than 2 label classes" in e for e in errors)

    def test_unknown_pre_label_rejected(self):
        rows = [UploadRow(text="t", upload_order=0, pre_label="maybe")]
        errors = validate_project_config("p", ["pos", "neg"], ProjectSettings(), rows)
        assert any("unknown pre-label" in e for e in errors)

    def test_duplicate_labels_and_empty_name(self):
        errors = validate_project_config("", ["a", "a"], ProjectSettings())
        assert any("duplicate label" in e for e in errors)
        assert any("name must be nonempty" in e for e in errors)

    def test_bad_batch_size(self):
        errors = validate_project_config("p", ["a", "b"], ProjectSettings(batch_size=0))
        assert any("batch_size" in e for e in errors)

    def test_irr_constraints(self):
        errors = validate_project_config(
            "p", ["a", "b"], ProjectSettings(irr_enabled=True, irr_overlap_percent=0)
        )
        assert any("irr_overlap_percent" in e for e in errors)
        errors = validate_project_config(
            "p", ["a", "b"], ProjectSettings(irr_enabled=True, batch_size=1, irr_coder_count=2)
        )
        assert any("batch_size must be at least irr_coder_count" in e for e in errors)

    def test_defaults(self):
        s = ProjectSettings()
        assert s.batch_size == 30
        assert s.al_method is ALMethod.LEAST_CONFIDENT
        assert s.irr_overlap_percent == 10
        assert s.irr_coder_count == 2
        assert s.lease_ttl_seconds == 900
        assert s.max_vocabulary == 50_000
        assert s.cv_folds == 5
