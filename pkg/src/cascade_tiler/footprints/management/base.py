import logging
from pathlib import Path

from django.core.exceptions import ImproperlyConfigured, ValidationError
from django.core.management.base import BaseCommand, CommandError

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
PROCESSING_ERROR = 1


def error_text(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(exc.messages)
    return str(exc)


class CascadeCommand(BaseCommand):
    """
    Shared error policy: configuration and usage problems exit with 2,
    failures while processing exit with 1. Subclasses implement ``run``.
    """

    usage_errors = (ImproperlyConfigured, FileNotFoundError)

    def run(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except CommandError:
            raise
        except self.usage_errors as exc:
            raise CommandError(error_text(exc), returncode=USAGE_ERROR) from exc
        except (ValidationError, OSError) as exc:
            logger.info("Command failed: %s", error_text(exc))
            raise CommandError(error_text(exc), returncode=PROCESSING_ERROR) from exc

    def require_file(self, path, what: str) -> Path:
        path = Path(path)
        if not path.is_file():
            raise CommandError(f"{what} not found: {path}", returncode=USAGE_ERROR)
        return path
