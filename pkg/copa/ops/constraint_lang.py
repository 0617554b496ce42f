"""
Sentence grammar for spatial constraints and subsequent actions.

Sentences follow fixed templates such as::

    Vector 1 and Vector 3 are on the same line, with the opposite direction.
    The target position of Point 1 is 5 cm along Vector 3 from Point 3's current position.
    Move vertically down 7 cm.

Parsing tolerates case, repeated whitespace and a missing final period.
Quantities are written in centimeters and stored in meters; ``format``
prints a value that parses back to the identical float.
"""
import difflib
import logging
import math
import re
from dataclasses import dataclass, field, fields
from decimal import Context, Decimal, InvalidOperation, localcontext
from typing import Callable, ClassVar, List, Mapping, Sequence, Tuple, Union

import numpy as np

from ..common.errors import (
    BadUnit, ConstraintError, ConstraintParseFailure, KindMismatch, UnknownLabel,
    UnrecognizedTemplate
)
from ..common.models import MotionPlanDocument
from .part_model import GeometricElement

logger = logging.getLogger(__name__)

MAX_SENTENCE_LENGTH = 500
VECTOR_SLOT = "vector"
QUANTITY_FIELDS = ("distance", "height")
POINT_SLOT = "point"


# IR

MAX_LABEL = 10**9 - 1


class _PartRefs:
    """Part labels are written with at most nine digits."""

    def __post_init__(self):
        for slot, _ in self.SLOTS:
            label = getattr(self, slot)
            if not 0 <= label <= MAX_LABEL:
                raise UnknownLabel(
                    f"part label {label} is outside 0..{MAX_LABEL}", {"slot": slot, "label": label}
                )


@dataclass(frozen=True)
class CollinearOpposite(_PartRefs):
    a: int
    b: int
    SLOTS: ClassVar = (("a", VECTOR_SLOT), ("b", VECTOR_SLOT))


@dataclass(frozen=True)
class TargetAlong(_PartRefs):
    a: int
    b: int
    c: int
    distance: float
    SLOTS: ClassVar = (("a", POINT_SLOT), ("b", VECTOR_SLOT), ("c", POINT_SLOT))


@dataclass(frozen=True)
class ParallelToTable(_PartRefs):
    a: int
    SLOTS: ClassVar = (("a", VECTOR_SLOT),)


@dataclass(frozen=True)
class HeightAboveTable(_PartRefs):
    a: int
    height: float
    SLOTS: ClassVar = (("a", POINT_SLOT),)


@dataclass(frozen=True)
class PerpendicularToTable(_PartRefs):
    a: int
    SLOTS: ClassVar = (("a", VECTOR_SLOT),)


@dataclass(frozen=True)
class PointsDownward(_PartRefs):
    a: int
    SLOTS: ClassVar = (("a", VECTOR_SLOT),)


Constraint = Union[
    CollinearOpposite, TargetAlong, ParallelToTable, HeightAboveTable,
    PerpendicularToTable, PointsDownward,
]
CONSTRAINT_TYPES = (
    CollinearOpposite, TargetAlong, ParallelToTable, HeightAboveTable,
    PerpendicularToTable, PointsDownward,
)


@dataclass(frozen=True)
class MoveVerticallyDown:
    distance: float


@dataclass(frozen=True)
class MoveForward:
    distance: float


@dataclass(frozen=True)
class OpenGripper:
    pass


@dataclass(frozen=True)
class RotateEndEffector180:
    pass


SubsequentAction = Union[MoveVerticallyDown, MoveForward, OpenGripper, RotateEndEffector180]
ACTION_TYPES = (MoveVerticallyDown, MoveForward, OpenGripper, RotateEndEffector180)


@dataclass(frozen=True)
class MotionPlan:
    constraints: Tuple[Constraint, ...] = ()
    actions: Tuple[SubsequentAction, ...] = ()


def part_refs(c: Constraint) -> List[Tuple[str, int, str]]:
    """(slot, element id, slot kind) in slot order."""
    return [(slot, getattr(c, slot), kind) for slot, kind in c.SLOTS]


# Quantities

def _cm_to_m(text: str) -> float:
    with localcontext(Context(prec=80)):
        value = float(Decimal(text) / 100)
    if not math.isfinite(value):
        raise InvalidOperation(text)
    return value


def _m_to_cm_text(meters: float) -> str:
    """Shortest decimal centimeter string that parses back to ``meters``."""
    with localcontext(Context(prec=80)):
        exact = Decimal(meters) * 100
    for digits in range(1, 21):
        candidate = Context(prec=digits).create_decimal(exact).normalize()
        text = _plain(candidate)
        if _cm_to_m(text) == meters:
            return text
    return _plain(exact.normalize())


def _plain(value: Decimal) -> str:
    if value == 0:
        return "-0" if value.is_signed() else "0"
    if -7 <= value.adjusted() <= 15:
        return "{:f}".format(value)
    return "{:e}".format(value)


# Templates

_LABEL = r"(?:vector|point|surface)\s+(\d{1,9})"
_QTY = r"([+-]?(?:\d{1,30}(?:\.\d{0,30})?|\.\d{1,30})(?:e[+-]?\d{1,3})?)\s*([^\W\d_]+)"


@dataclass(frozen=True)
class _Template:
    name: str
    pattern: str
    canonical: str
    build: Callable
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        body = self.pattern.replace("{L}", _LABEL).replace("{X}", _QTY).replace(" ", r"\s+")
        object.__setattr__(self, "regex", re.compile(rf"^{body}$", re.IGNORECASE))


def _quantity(number: str, unit: str) -> float:
    if unit.lower() != "cm":
        raise BadUnit(f"unit '{unit}' is not supported (use cm)", {"unit": unit})
    try:
        return _cm_to_m(number)
    except (InvalidOperation, ValueError):
        raise UnrecognizedTemplate(f"quantity '{number}' is not a finite number")


def _positive(value: float, sentence: str) -> float:
    if not value > 0:
        raise UnrecognizedTemplate(f"distance in '{sentence}' must be positive", closest=sentence)
    return value


CONSTRAINT_TEMPLATES = [
    _Template(
        "collinear_opposite",
        r"{L} and {L} are on the same line,?\s*with the opposite direction",
        "Vector {a} and Vector {b} are on the same line, with the opposite direction.",
        lambda g: CollinearOpposite(int(g[0]), int(g[1])),
    ),
    _Template(
        "target_along",
        r"the target position of {L} is {X} along {L} from {L}['’]s current position",
        "The target position of Point {a} is {distance} cm along Vector {b} from Point {c}'s current position.",
        lambda g: TargetAlong(int(g[0]), int(g[3]), int(g[4]), _quantity(g[1], g[2])),
    ),
    _Template(
        "parallel_to_table",
        r"{L} is parallel to the table surface",
        "Vector {a} is parallel to the table surface.",
        lambda g: ParallelToTable(int(g[0])),
    ),
    _Template(
        "height_above_table",
        r"{L} is {X} above the table surface",
        "Point {a} is {height} cm above the table surface.",
        lambda g: HeightAboveTable(int(g[0]), _quantity(g[1], g[2])),
    ),
    _Template(
        "perpendicular_to_table",
        r"{L} is perpendicular to the table surface",
        "Vector {a} is perpendicular to the table surface.",
        lambda g: PerpendicularToTable(int(g[0])),
    ),
    _Template(
        "points_downward",
        r"{L} points downwards?",
        "Vector {a} points downward.",
        lambda g: PointsDownward(int(g[0])),
    ),
]

ACTION_TEMPLATES = [
    _Template(
        "move_vertically_down",
        r"move vertically down {X}",
        "Move vertically down {distance} cm.",
        lambda g: MoveVerticallyDown(_positive(_quantity(g[0], g[1]), "Move vertically down")),
    ),
    _Template(
        "move_forward",
        r"move forward {X}",
        "Move forward {distance} cm.",
        lambda g: MoveForward(_positive(_quantity(g[0], g[1]), "Move forward")),
    ),
    _Template(
        "open_gripper",
        r"open the gripper",
        "Open the gripper.",
        lambda g: OpenGripper(),
    ),
    _Template(
        "rotate_180",
        r"end(?:-|\s)?effector rotates 180 degrees",
        "End-effector rotates 180 degrees.",
        lambda g: RotateEndEffector180(),
    ),
]

_TEMPLATE_BY_TYPE = {
    CollinearOpposite: CONSTRAINT_TEMPLATES[0],
    TargetAlong: CONSTRAINT_TEMPLATES[1],
    ParallelToTable: CONSTRAINT_TEMPLATES[2],
    HeightAboveTable: CONSTRAINT_TEMPLATES[3],
    PerpendicularToTable: CONSTRAINT_TEMPLATES[4],
    PointsDownward: CONSTRAINT_TEMPLATES[5],
    MoveVerticallyDown: ACTION_TEMPLATES[0],
    MoveForward: ACTION_TEMPLATES[1],
    OpenGripper: ACTION_TEMPLATES[2],
    RotateEndEffector180: ACTION_TEMPLATES[3],
}


def _normalize(text: str) -> str:
    if not isinstance(text, str):
        raise UnrecognizedTemplate(f"expected a sentence, got {type(text).__name__}")
    if len(text) > MAX_SENTENCE_LENGTH:
        raise UnrecognizedTemplate(f"sentence longer than {MAX_SENTENCE_LENGTH} characters")
    text = " ".join(text.split())
    return text[:-1].rstrip() if text.endswith(".") else text


def _match(text: str, templates: Sequence[_Template]):
    normalized = _normalize(text)
    for template in templates:
        m = template.regex.match(normalized)
        if m:
            return template.build(m.groups())
    closest = difflib.get_close_matches(
        normalized.lower(), [t.canonical.lower() for t in templates], n=1, cutoff=0.0
    )
    name = None
    if closest:
        name = next(t.canonical for t in templates if t.canonical.lower() == closest[0])
    raise UnrecognizedTemplate(f"'{normalized[:80]}' matches no template", closest=name)


def parse_constraint(text: str) -> Constraint:
    """
    Parse one constraint sentence.

    Raises:
        UnrecognizedTemplate: naming the closest template
        BadUnit: for any unit other than cm
    """
    return _match(text, CONSTRAINT_TEMPLATES)


def parse_action(text: str) -> SubsequentAction:
    return _match(text, ACTION_TEMPLATES)


def parse_sentence(text: str) -> Union[Constraint, SubsequentAction]:
    """Parse either kind of sentence; constraint templates are tried first."""
    try:
        return parse_constraint(text)
    except UnrecognizedTemplate:
        return parse_action(text)


def format(item: Union[Constraint, SubsequentAction]) -> str:
    """Canonical sentence for an IR value; ``parse(format(x)) == x``."""
    template = _TEMPLATE_BY_TYPE.get(type(item))
    if template is None:
        raise UnrecognizedTemplate(f"cannot format {type(item).__name__}")
    values = {}
    for f in fields(item):
        value = getattr(item, f.name)
        values[f.name] = _m_to_cm_text(float(value)) if f.name in QUANTITY_FIELDS else value
    return template.canonical.format(**values)


def parse_plan(document: Union[MotionPlanDocument, Mapping]) -> MotionPlan:
    """
    Parse every sentence of an oracle plan.

    Raises:
        ConstraintParseFailure: listing every sentence that failed
    """
    if not isinstance(document, MotionPlanDocument):
        document = MotionPlanDocument.model_validate(document)
    constraints, actions, offending, reasons = [], [], [], []
    for text in document.constraints:
        try:
            constraints.append(parse_constraint(text))
        except ConstraintError as e:
            offending.append(text)
            reasons.append(e.message)
    for text in document.actions:
        try:
            actions.append(parse_action(text))
        except ConstraintError as e:
            offending.append(text)
            reasons.append(e.message)
    if offending:
        raise ConstraintParseFailure(offending, reasons)
    return MotionPlan(tuple(constraints), tuple(actions))


def plan_document(plan: MotionPlan) -> MotionPlanDocument:
    return MotionPlanDocument(
        constraints=[format(c) for c in plan.constraints],
        actions=[format(a) for a in plan.actions],
    )


# Resolution

@dataclass(frozen=True, eq=False)
class ResolvedConstraint:
    """A constraint with its element references bound, in slot order."""
    constraint: Constraint
    elements: Tuple[GeometricElement, ...]

    def slot(self, name: str) -> GeometricElement:
        for (slot, _), element in zip(self.constraint.SLOTS, self.elements):
            if slot == name:
                return element
        raise KeyError(name)

    def vector(self, name: str) -> np.ndarray:
        """Direction bound to a vector slot; surfaces contribute their normal."""
        element = self.slot(name)
        return element.vector.direction if element.is_vector else element.surface.normal

    def point(self, name: str) -> np.ndarray:
        """Associated point: a vector's anchor or a surface's center."""
        element = self.slot(name)
        return element.vector.anchor_point if element.is_vector else element.surface.center

    def text(self) -> str:
        return format(self.constraint)


@dataclass(frozen=True, eq=False)
class ResolvedPlan:
    constraints: Tuple[ResolvedConstraint, ...]
    actions: Tuple[SubsequentAction, ...]


def resolve_constraint(c: Constraint, elements: Mapping[int, GeometricElement],
                       strict_kinds: bool = False) -> ResolvedConstraint:
    bound = []
    for slot, element_id, kind in part_refs(c):
        element = elements.get(element_id)
        if element is None:
            raise UnknownLabel(
                f"label {element_id} in '{format(c)}' is not an annotated element",
                {"label": element_id, "known": sorted(elements)},
            )
        if strict_kinds and kind == VECTOR_SLOT and not element.is_vector:
            raise KindMismatch(
                f"slot {slot} of '{format(c)}' needs a vector, element {element_id} is a surface",
                {"label": element_id, "slot": slot},
            )
        bound.append(element)
    return ResolvedConstraint(c, tuple(bound))


def resolve(plan: MotionPlan, elements: Union[Mapping[int, GeometricElement], Sequence[GeometricElement]],
            strict_kinds: bool = False) -> ResolvedPlan:
    """
    Bind every label to an element.

    Vector slots accept a surface through its normal unless ``strict_kinds``.

    Raises:
        UnknownLabel: a label with no element
        KindMismatch: a surface in a vector slot under ``strict_kinds``
    """
    if not isinstance(elements, Mapping):
        elements = {e.id: e for e in elements}
    resolved = tuple(resolve_constraint(c, elements, strict_kinds) for c in plan.constraints)
    logger.debug(f"Resolved {len(resolved)} constraint(s) against {len(elements)} element(s)")
    return ResolvedPlan(resolved, tuple(plan.actions))
