from django import forms
from django.core.exceptions import ValidationError

AUTO = "auto"


def positive(value):
    if value is not None and value <= 0:
        raise ValidationError("Must be greater than zero.")


def non_negative(value):
    if value is not None and value < 0:
        raise ValidationError("Must be zero or greater.")


class ConfigForm(forms.Form):
    """Validates a flat selftrap configuration. Field names are the config
    keys, unit suffix included."""

    # atom-cavity system
    kappa_MHz = forms.FloatField(validators=[positive])
    g_MHz = forms.FloatField(validators=[positive])
    gamma_MHz = forms.FloatField(validators=[positive])
    delta_A_MHz = forms.FloatField()
    u0_factor = forms.FloatField(validators=[positive], max_value=1.0)
    omega_rec_kHz = forms.FloatField(validators=[positive])
    wavelength_um = forms.FloatField(validators=[positive])
    waist_um = forms.FloatField(validators=[positive])
    cavity_length_mm = forms.FloatField(validators=[positive])
    gravity_um_per_ms2 = forms.FloatField(validators=[non_negative])

    # drive
    delta_C_MHz = forms.FloatField()
    eta_over_kappa = forms.FloatField(validators=[non_negative])
    power_uW = forms.FloatField(validators=[non_negative])
    n_eff_u0_MHz = forms.FloatField()

    # power calibration anchor
    anchor_power_uW = forms.FloatField(validators=[positive])
    anchor_saturation = forms.FloatField(validators=[positive])
    anchor_delta_C_MHz = forms.FloatField()
    anchor_n_eff_u0_MHz = forms.FloatField()

    # protocol
    temperature_uK = forms.FloatField(validators=[non_negative])
    cloud_sigma_um = forms.FloatField(validators=[positive])
    transverse_window_um = forms.FloatField(validators=[non_negative])
    release_time_ms = forms.FloatField(validators=[non_negative])
    drive_on_ms = forms.FloatField(validators=[non_negative])
    shutter_ramp_ms = forms.FloatField(validators=[non_negative])
    record_until_ms = forms.FloatField(validators=[positive])
    dt_us = forms.FloatField(validators=[non_negative])
    sample_every_us = forms.FloatField(validators=[positive])
    n_atoms = forms.CharField()
    n_macroparticles = forms.IntegerField(min_value=100)
    seed = forms.IntegerField(min_value=0)

    # empirical heating
    d0 = forms.FloatField(validators=[non_negative])
    d1 = forms.FloatField(validators=[non_negative])

    def clean_n_atoms(self):
        value = self.cleaned_data["n_atoms"].strip()
        if value.lower() == AUTO:
            return None
        try:
            number = float(value)
        except ValueError:
            raise ValidationError("Enter a number or 'auto'.")
        if number < 0:
            raise ValidationError("Must be zero or greater.")
        return number

    def clean(self):
        cleaned = super().clean()
        release = cleaned.get("release_time_ms")
        drive_on = cleaned.get("drive_on_ms")
        record_until = cleaned.get("record_until_ms")
        if None not in (release, drive_on, record_until):
            if not release <= drive_on < record_until:
                self.add_error(
                    "drive_on_ms",
                    "Expected release_time_ms <= drive_on_ms < record_until_ms.",
                )
        return cleaned
