import copy
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import cerberus
import funcy as fu
import yaml

from core.errors import ConfigError, _raise_error
from core.settings import FlexibleDict

logger = logging.getLogger(__name__)

__all__ = ("verify", "load_yaml", "annotate_lines", "Marks")

# dotted path ("model.transition.1") -> 1-based line of its key
Marks = Dict[str, int]


def _collect_marks(node: yaml.Node, prefix: str, marks: Marks) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            marks[path] = key_node.start_mark.line + 1
            _collect_marks(value_node, path, marks)
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            path = f"{prefix}.{index}"
            marks[path] = item.start_mark.line + 1
            _collect_marks(item, path, marks)


def load_yaml(path: Union[str, Path]) -> Tuple[Dict[str, Any], Marks]:
    """Parse a YAML file and record the line of every key and list item."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        _raise_error(ConfigError, error_details={"config": [f"cannot read {path}: {e.strerror}"]})

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        document = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        _raise_error(ConfigError, error_details={"config": [f"{e.problem}{where}"]})

    if document is None:
        document = {}
    if not isinstance(document, dict):
        _raise_error(ConfigError, error_details={"config": ["top level must be a mapping of blocks"]})

    marks: Marks = {}
    if root is not None:
        _collect_marks(root, "", marks)
    return document, marks


def _line_of(path: str, marks: Marks) -> Union[int, None]:
    # fall back to the nearest enclosing key that exists in the file
    parts = path.split(".")
    while parts:
        line = marks.get(".".join(parts))
        if line is not None:
            return line
        parts.pop()
    return None


def _flatten(errors: Dict[Any, List[Any]], prefix: str = "") -> Dict[str, List[str]]:
    flat: Dict[str, List[str]] = {}
    for field, problems in errors.items():
        path = f"{prefix}.{field}" if prefix else str(field)
        for problem in problems:
            if isinstance(problem, dict):
                for sub_path, sub_problems in _flatten(problem, path).items():
                    flat.setdefault(sub_path, []).extend(sub_problems)
            else:
                flat.setdefault(path, []).append(str(problem))
    return flat


def annotate_lines(details: Dict[str, List[str]], marks: Marks) -> Dict[str, List[str]]:
    annotated = {}
    for path, problems in details.items():
        line = _line_of(path, marks)
        suffix = f" (line {line})" if line is not None else ""
        annotated[path] = [f"{problem}{suffix}" for problem in problems]
    return annotated


@fu.decorator
def verify(call, validation_schema, error_class=ConfigError, **kwargs):
    """Validate the ``(document, marks)`` pair returned by the wrapped loader.

    Returns the normalized document (defaults filled in) as a ``FlexibleDict``
    together with the marks.
    """
    document, marks = call()
    validator = cerberus.Validator(validation_schema, **kwargs)
    if not validator.validate(document):
        details = annotate_lines(_flatten(validator.errors), marks)
        logger.debug("Run configuration rejected", extra={"fields": sorted(details)})
        _raise_error(error_class, error_details=details)
    return FlexibleDict(copy.deepcopy(validator.document)), marks
