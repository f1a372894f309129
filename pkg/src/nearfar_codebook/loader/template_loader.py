from pathlib import Path
from typing import List, Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined, Template, TemplateNotFound


class TemplateLoader:
    """Loads and renders the Jinja2 text templates used for reports and metadata files"""

    def __init__(self, template_dir: Optional[str] = None):
        if template_dir is None:
            template_dir = Path(__file__).parent / "templates"

        self.template_dir = Path(template_dir)
        if not self.template_dir.is_dir():
            raise FileNotFoundError(f"Template directory {self.template_dir} does not exist or is not a directory.")

        # Text output, not HTML: no autoescaping, keep trailing newlines
        self.env = Environment(
            loader=FileSystemLoader(self.template_dir),
            undefined=StrictUndefined,
            keep_trailing_newline=True,
            trim_blocks=True,
            lstrip_blocks=True,
        )

    def load_template(self, template_name: str) -> Template:
        """
        Load a template by name, with or without the .j2 extension
        """
        if not template_name.endswith(".j2"):
            template_name += ".j2"
        try:
            return self.env.get_template(template_name)
        except TemplateNotFound as e:
            raise FileNotFoundError(f"Template '{template_name}' not found in {self.template_dir}: {e}")

    def render_template(self, template_name: str, **kwargs) -> str:
        return self.load_template(template_name).render(**kwargs)

    def list_templates(self) -> List[str]:
        return sorted(f.name for f in self.template_dir.glob("*.j2"))


template_loader = TemplateLoader()
