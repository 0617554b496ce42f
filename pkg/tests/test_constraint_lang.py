import pytest
from hypothesis import given
from hypothesis import strategies as st

from copa.common.errors import (
    BadUnit,
    ConstraintError,
    ConstraintParseFailure,
    KindMismatch,
    UnknownLabel,
    UnrecognizedTemplate,
)
from copa.common.models import MotionPlanDocument
from copa.ops import constraint_lang as lang
from copa.ops.constraint_lang import (
    CollinearOpposite,
    HeightAboveTable,
    MotionPlan,
    MoveForward,
    MoveVerticallyDown,
    OpenGripper,
    ParallelToTable,
    PerpendicularToTable,
    PointsDownward,
    RotateEndEffector180,
    TargetAlong,
    parse_action,
    parse_constraint,
    parse_plan,
    parse_sentence,
    plan_document,
    resolve,
)

from .conftest import surface_element, vector_element

labels = st.integers(0, 10**9 - 1)
quantities = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)
distances = st.floats(1e-6, 1e4, allow_nan=False, allow_infinity=False)

constraints = st.one_of(
    st.builds(CollinearOpposite, labels, labels),
    st.builds(TargetAlong, labels, labels, labels, quantities),
    st.builds(ParallelToTable, labels),
    st.builds(HeightAboveTable, labels, quantities),
    st.builds(PerpendicularToTable, labels),
    st.builds(PointsDownward, labels),
)
actions = st.one_of(
    st.builds(MoveVerticallyDown, distances),
    st.builds(MoveForward, distances),
    st.just(OpenGripper()),
    st.just(RotateEndEffector180()),
)


@given(constraints)
def test_constraint_format_parses_back(c):
    assert parse_constraint(lang.format(c)) == c


@given(actions)
def test_action_format_parses_back(a):
    assert parse_action(lang.format(a)) == a


@given(st.text(max_size=200))
def test_arbitrary_text_never_escapes_typed_errors(text):
    try:
        parse_sentence(text)
    except ConstraintError:
        pass


@pytest.mark.parametrize("text,expected", [
    ("Vector 1 and Vector 3 are on the same line, with the opposite direction.", CollinearOpposite(1, 3)),
    ("vector 1 AND vector 3 are on the same line with the opposite direction", CollinearOpposite(1, 3)),
    ("The target position of Point 1 is 5 cm along Vector 3 from Point 3's current position.",
     TargetAlong(1, 3, 3, 0.05)),
    ("  Point 2 is 10cm above   the table surface ", HeightAboveTable(2, 0.10)),
    ("Surface 4 is parallel to the table surface.", ParallelToTable(4)),
    ("Vector 1 is perpendicular to the table surface.", PerpendicularToTable(1)),
    ("Vector 1 points downwards.", PointsDownward(1)),
])
def test_parse_constraint_examples(text, expected):
    assert parse_constraint(text) == expected


@pytest.mark.parametrize("text,expected", [
    ("Move vertically down 7 cm.", MoveVerticallyDown(0.07)),
    ("move forward 2.5 cm", MoveForward(0.025)),
    ("Open the gripper.", OpenGripper()),
    ("End effector rotates 180 degrees.", RotateEndEffector180()),
])
def test_parse_action_examples(text, expected):
    assert parse_action(text) == expected


def test_canonical_text():
    assert lang.format(TargetAlong(1, 3, 3, 0.05)) == (
        "The target position of Point 1 is 5 cm along Vector 3 from Point 3's current position."
    )
    assert lang.format(MoveVerticallyDown(0.07)) == "Move vertically down 7 cm."


def test_labels_are_bounded_to_nine_digits():
    widest = HeightAboveTable(lang.MAX_LABEL, 0.1)
    assert parse_constraint(lang.format(widest)) == widest
    with pytest.raises(UnknownLabel):
        HeightAboveTable(lang.MAX_LABEL + 1, 0.1)
    with pytest.raises(UnknownLabel):
        TargetAlong(1, 2, -3, 0.05)


def test_non_cm_unit_is_rejected():
    with pytest.raises(BadUnit):
        parse_constraint("Point 2 is 10 mm above the table surface.")


def test_unknown_sentence_names_closest_template():
    with pytest.raises(UnrecognizedTemplate) as info:
        parse_constraint("Vector 1 is parallel to the floor.")
    assert info.value.closest == "Vector {a} is parallel to the table surface."


@pytest.mark.parametrize("text", ["Move vertically down 0 cm.", "Move forward -3 cm."])
def test_action_distance_must_be_positive(text):
    with pytest.raises(UnrecognizedTemplate):
        parse_action(text)


def test_overlong_sentence_is_rejected():
    with pytest.raises(UnrecognizedTemplate):
        parse_constraint("Vector 1 points downward" + " " * 600)


def test_parse_plan_collects_every_failure():
    doc = MotionPlanDocument(
        constraints=["Vector 1 points downward.", "Vector 1 dances.", "Point 1 is 3 in above the table surface."],
        actions=["Move vertically down 5 cm.", "Jump."],
    )
    with pytest.raises(ConstraintParseFailure) as info:
        parse_plan(doc)
    assert info.value.offending == [
        "Vector 1 dances.", "Point 1 is 3 in above the table surface.", "Jump.",
    ]
    assert info.value.exit_code == 3


def test_plan_document_round_trip():
    plan = MotionPlan(
        (CollinearOpposite(1, 3), TargetAlong(1, 3, 3, 0.05)),
        (MoveVerticallyDown(0.07),),
    )
    assert parse_plan(plan_document(plan)) == plan


@pytest.fixture
def elements():
    return [
        vector_element(1, [0, 0, 0], [0.1, 0, 0]),
        surface_element(3, [0.5, 0, 0.1], [0, 0, 1]),
    ]


def test_resolve_binds_slots(elements):
    plan = MotionPlan((TargetAlong(1, 3, 3, 0.05),), ())
    rc = resolve(plan, elements).constraints[0]
    assert [e.id for e in rc.elements] == [1, 3, 3]
    assert list(rc.point("a")) == [0.1, 0, 0]
    # a surface in a vector slot contributes its normal
    assert list(rc.vector("b")) == [0, 0, 1]
    assert list(rc.point("c")) == [0.5, 0, 0.1]


def test_resolve_unknown_label(elements):
    with pytest.raises(UnknownLabel):
        resolve(MotionPlan((ParallelToTable(7),), ()), elements)


def test_strict_kinds_rejects_surface_in_vector_slot(elements):
    plan = MotionPlan((CollinearOpposite(1, 3),), ())
    resolve(plan, elements)
    with pytest.raises(KindMismatch):
        resolve(plan, elements, strict_kinds=True)
